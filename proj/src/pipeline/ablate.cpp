#include "pipeline/ablate.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "core/pool.hpp"
#include "train/eval.hpp"

namespace plab {

namespace fs = std::filesystem;

namespace {

const char* dimension_key(const std::string& dimension) {
  if (dimension == "trigger") return "trigger.kind";
  if (dimension == "ratio") return "craft.ratio";
  if (dimension == "epsilon") return "craft.epsilon";
  if (dimension == "position") return "trigger.position";
  if (dimension == "size") return "trigger.size";
  throw ConfigError("unknown ablation dimension '" + dimension +
                    "'; expected trigger, ratio, epsilon, position or size");
}

std::string sanitize(const std::string& value) {
  std::string out;
  for (char c : value)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-') ? c : '_';
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

std::vector<std::string> default_grid(const std::string& dimension) {
  dimension_key(dimension);  // rejects unknown dimensions
  if (dimension == "trigger") return {"hurdle", "hoverball", "blended"};
  if (dimension == "ratio") return {"0.1", "0.2"};
  if (dimension == "epsilon") return {"4/255", "8/255", "12/255", "16/255"};
  if (dimension == "position") return {"top_left", "center", "button", "background"};
  return {"0.0005", "0.001", "0.005", "0.01"};
}

RunConfig apply_dimension(const RunConfig& base, const std::string& dimension,
                          const std::string& value) {
  RunConfig cfg = base;
  apply_override(cfg, std::string(dimension_key(dimension)) + "=" + value);
  cfg.validate();
  return cfg;
}

AblationTable run_ablation(const RunConfig& base, const AblationSpec& spec,
                           const fs::path& root) {
  base.validate();
  if (root.empty()) throw ValidationError("ablation root path is empty");
  if (spec.seeds.empty()) throw ConfigError("ablation needs at least one seed");
  std::vector<std::string> values =
      spec.values.empty() ? default_grid(spec.dimension) : spec.values;
  if (values.empty()) throw ConfigError("ablation needs at least one value");

  // Reject bad cell values before any compute starts.
  std::vector<RunConfig> cell_cfgs;
  for (const std::string& v : values) cell_cfgs.push_back(apply_dimension(base, spec.dimension, v));

  const int n_seeds = static_cast<int>(spec.seeds.size());
  const int n_cells = static_cast<int>(values.size());
  const int workers = std::max(1, base.workers);
  auto shared_dir = [&](int si) {
    return root / "shared" / ("seed_" + std::to_string(spec.seeds[static_cast<std::size_t>(si)]));
  };

  // Phase 1: one clean prefix per seed, reused by every cell. The prefix
  // ignores the sweep dimension, so any cell config would produce it.
  std::vector<std::string> prefix_error(static_cast<std::size_t>(n_seeds));
  parallel_for(std::min(workers, n_seeds), n_seeds, [&](int si) {
    RunConfig c = base;
    c.seed = spec.seeds[static_cast<std::size_t>(si)];
    c.workers = 1;
    try {
      Pipeline p(c, shared_dir(si));
      p.synth();
      p.train_clean();
    } catch (const std::exception& e) {
      prefix_error[static_cast<std::size_t>(si)] = e.what();
    }
  });

  // Phase 2: craft, mixed fine-tune and evaluation per (value, seed).
  const int n_units = n_cells * n_seeds;
  std::vector<std::string> unit_error(static_cast<std::size_t>(n_units));
  std::vector<EvalReport> unit_report(static_cast<std::size_t>(n_units));
  parallel_for(workers, n_units, [&](int u) {
    const int ci = u / n_seeds, si = u % n_seeds;
    if (!prefix_error[static_cast<std::size_t>(si)].empty()) {
      unit_error[static_cast<std::size_t>(u)] = prefix_error[static_cast<std::size_t>(si)];
      return;
    }
    RunConfig c = cell_cfgs[static_cast<std::size_t>(ci)];
    c.seed = spec.seeds[static_cast<std::size_t>(si)];
    c.workers = 1;
    fs::path cell_root = root / "cells" /
                         (spec.dimension + "_" + sanitize(values[static_cast<std::size_t>(ci)])) /
                         ("seed_" + std::to_string(c.seed));
    try {
      Pipeline p(c, cell_root, shared_dir(si));
      p.craft();
      p.train_mixed();
      p.eval();
      unit_report[static_cast<std::size_t>(u)] =
          read_eval_report(p.workspace().eval_report_file());
    } catch (const std::exception& e) {
      unit_error[static_cast<std::size_t>(u)] = e.what();
    }
  });

  AblationTable table;
  table.dimension = spec.dimension;
  table.seeds = spec.seeds;
  for (int ci = 0; ci < n_cells; ++ci) {
    AblationCell cell;
    cell.dimension = spec.dimension;
    cell.value = values[static_cast<std::size_t>(ci)];
    cell.seeds = spec.seeds;
    std::vector<double> asr, casr, fsr, ofsr, delta;
    for (int si = 0; si < n_seeds; ++si) {
      const int u = ci * n_seeds + si;
      const std::string& err = unit_error[static_cast<std::size_t>(u)];
      if (!err.empty()) {
        cell.failed = true;
        if (cell.error.empty())
          cell.error = "seed " + std::to_string(spec.seeds[static_cast<std::size_t>(si)]) + ": " +
                       err;
        continue;
      }
      const EvalReport& r = unit_report[static_cast<std::size_t>(u)];
      asr.push_back(r.action_asr);
      if (r.context_asr >= 0.0) casr.push_back(r.context_asr);
      fsr.push_back(r.fsr);
      ofsr.push_back(r.o_fsr);
      delta.push_back(r.delta);
      cell.seed_action_asr.push_back(r.action_asr);
      cell.seed_fsr.push_back(r.fsr);
      cell.seed_o_fsr.push_back(r.o_fsr);
    }
    if (!cell.failed) {
      cell.action_asr = median(asr);
      cell.context_asr = casr.size() == asr.size() ? median(casr) : -1.0;
      cell.fsr = median(fsr);
      cell.o_fsr = median(ofsr);
      cell.delta = median(delta);
    }
    table.cells.push_back(std::move(cell));
  }
  return table;
}

void write_ablation_json(const fs::path& path, const AblationTable& table) {
  nlohmann::json j;
  j["dimension"] = table.dimension;
  j["seeds"] = table.seeds;
  nlohmann::json cells = nlohmann::json::array();
  for (const AblationCell& c : table.cells) {
    nlohmann::json o;
    o["value"] = c.value;
    o["failed"] = c.failed;
    if (c.failed) {
      o["error"] = c.error;
    } else {
      o["action_asr"] = c.action_asr;
      if (c.context_asr < 0.0)
        o["context_asr"] = nullptr;
      else
        o["context_asr"] = c.context_asr;
      o["fsr"] = c.fsr;
      o["o_fsr"] = c.o_fsr;
      o["delta"] = c.delta;
      o["seed_action_asr"] = c.seed_action_asr;
      o["seed_fsr"] = c.seed_fsr;
      o["seed_o_fsr"] = c.seed_o_fsr;
    }
    cells.push_back(std::move(o));
  }
  j["cells"] = std::move(cells);
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

void write_ablation_csv(const fs::path& path, const AblationTable& table) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "dimension,value,status,action_asr,context_asr,fsr,o_fsr,delta,seeds\n";
  for (const AblationCell& c : table.cells) {
    std::string seeds;
    for (std::uint64_t s : c.seeds) seeds += (seeds.empty() ? "" : ";") + std::to_string(s);
    out << c.dimension << "," << c.value << ",";
    if (c.failed) {
      out << "failed,,,,,," << seeds << "\n";
      continue;
    }
    out << "ok," << fixed4(c.action_asr) << ","
        << (c.context_asr < 0.0 ? std::string() : fixed4(c.context_asr)) << "," << fixed4(c.fsr)
        << "," << fixed4(c.o_fsr) << "," << fixed4(c.delta) << "," << seeds << "\n";
  }
  if (!out.flush()) throw std::runtime_error("failed writing " + path.string());
}

std::string ablation_text(const AblationTable& table) {
  std::string t = "ablation over " + table.dimension + " (medians over ";
  t += std::to_string(table.seeds.size()) + " seeds)\n";
  t += "  value        A-ASR     C-ASR     FSR       O-FSR     delta\n";
  for (const AblationCell& c : table.cells) {
    std::string row = "  " + c.value + std::string(c.value.size() < 11 ? 11 - c.value.size() : 1, ' ');
    if (c.failed) {
      row += "FAILED: " + c.error;
    } else {
      auto col = [](const std::string& s) { return s + std::string(s.size() < 8 ? 8 - s.size() : 1, ' ') + "  "; };
      row += col(fixed4(c.action_asr));
      row += col(c.context_asr < 0.0 ? "n/a" : fixed4(c.context_asr));
      row += col(fixed4(c.fsr));
      row += col(fixed4(c.o_fsr));
      row += fixed4(c.delta);
    }
    t += row + "\n";
  }
  return t;
}

}  // namespace plab
