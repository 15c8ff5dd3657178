#include "craft/poison_io.hpp"

#include <fstream>

#include <json.hpp>

#include "img/png.hpp"
#include "img/ten.hpp"

namespace plab {
namespace {

using nlohmann::json;

json trigger_json(const TriggerSpec& t) {
  return json{{"kind", trigger_kind_name(t.kind)}, {"pos_x", t.pos_x},
              {"pos_y", t.pos_y},                  {"size_fraction", t.size_fraction},
              {"opacity", t.opacity}};
}

}  // namespace

void write_poisoned_dataset(const std::filesystem::path& clean_dir,
                            const std::filesystem::path& out_dir, const Dataset& clean_train,
                            const CraftResult& result, const CraftConfig& cfg) {
  std::ifstream in(clean_dir / "manifest.jsonl", std::ios::binary);
  if (!in) throw CraftError("no clean manifest in " + clean_dir.string());
  std::string header_line;
  if (!std::getline(in, header_line)) throw CraftError("empty clean manifest");
  json header = json::parse(header_line);
  header["kind"] = "poisoned";
  header["poison"] = json{{"indices", result.poison_indices},
                          {"attack_type", cfg.attack_type},
                          {"epsilon", cfg.epsilon},
                          {"ratio", cfg.ratio},
                          {"seed", cfg.seed},
                          {"trigger", trigger_json(cfg.trigger)},
                          {"target_base_index", result.target.base_index}};

  std::filesystem::create_directories(out_dir / "images");
  std::ofstream out(out_dir / "manifest.jsonl", std::ios::binary);
  out << header.dump() << "\n";
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out << line << "\n";
  if (!out.flush()) throw CraftError("failed writing poisoned manifest");

  std::size_t next_poison = 0;
  for (const Sample& s : clean_train.samples) {
    std::filesystem::path src = clean_dir / s.image;
    std::filesystem::path dst = out_dir / s.image;
    bool poisoned = next_poison < result.poison_indices.size() &&
                    result.poison_indices[next_poison] == s.index;
    if (!poisoned) {
      write_file(dst, read_file(src));
      continue;
    }
    const Tensor& delta = result.deltas[next_poison];
    ++next_poison;
    if (delta.shape != s.pixels.shape) throw CraftError("delta shape mismatch for " + s.image);
    Tensor poisoned_pixels = s.pixels;
    for (std::size_t i = 0; i < delta.data.size(); ++i) poisoned_pixels.data[i] += delta.data[i];
    write_png(dst, poisoned_pixels);
    std::filesystem::path sidecar = dst;
    sidecar.replace_extension(".ten");
    write_tensor(sidecar, poisoned_pixels);
  }
  if (next_poison != result.poison_indices.size())
    throw CraftError("poison indices not found in training manifest order");
}

void write_craft_report(const std::filesystem::path& path, const CraftResult& result,
                        const CraftConfig& cfg, std::uint64_t config_hash) {
  json traces = json::array();
  for (const auto& t : result.traces) {
    traces.push_back(json{{"index", t.index},
                          {"seed", t.seed},
                          {"step_losses", t.step_losses},
                          {"final_loss", t.final_loss},
                          {"aborted", t.aborted},
                          {"abort_reason", t.abort_reason}});
  }
  json j{{"config_hash", config_hash},
         {"craft",
          json{{"epsilon", cfg.epsilon},
               {"steps", cfg.steps},
               {"restarts", cfg.restarts},
               {"lr", cfg.lr},
               {"batch", cfg.batch},
               {"ratio", cfg.ratio},
               {"attack_type", cfg.attack_type},
               {"seed", cfg.seed},
               {"trigger", trigger_json(cfg.trigger)}}},
         {"poison_indices", result.poison_indices},
         {"target",
          json{{"attack_type", result.target.attack_type},
               {"base_index", result.target.base_index},
               {"prompt", result.target.prompt},
               {"verb", result.target.action.verb},
               {"arg", result.target.action.arg},
               {"rationale", result.target.action.rationale}}},
         {"target_grad_norm", result.target_grad_norm},
         {"selected_restart", result.selected_restart},
         {"selected_loss", result.selected_loss},
         {"max_abs_delta", result.max_abs_delta},
         {"mean_abs_delta", result.mean_abs_delta},
         {"traces", traces},
         {"wall_seconds", result.wall_seconds}};
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << "\n";
  if (!out.flush()) throw CraftError("failed writing craft report to " + path.string());
}

CraftReport read_craft_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CraftError("no craft report at " + path.string());
  json j = json::parse(in);
  CraftReport r;
  r.config_hash = j.at("config_hash").get<std::uint64_t>();
  r.attack_type = j.at("craft").at("attack_type").get<int>();
  r.seed = j.at("craft").at("seed").get<std::uint64_t>();
  r.epsilon = j.at("craft").at("epsilon").get<double>();
  r.poison_indices = j.at("poison_indices").get<std::vector<int>>();
  r.selected_restart = j.at("selected_restart").get<int>();
  r.selected_loss = j.at("selected_loss").get<double>();
  r.max_abs_delta = j.at("max_abs_delta").get<double>();
  r.target_base_index = j.at("target").at("base_index").get<int>();
  return r;
}

}  // namespace plab
