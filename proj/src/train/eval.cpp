#include "train/eval.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "core/pool.hpp"
#include "core/rng.hpp"
#include "img/jpeg.hpp"
#include "img/resize.hpp"
#include "trigger/stealth.hpp"

namespace plab {

namespace {

const Corruption kAll[] = {Corruption::kNone, Corruption::kResize80, Corruption::kJpeg50,
                           Corruption::kCrop20};

}  // namespace

const char* corruption_name(Corruption c) {
  switch (c) {
    case Corruption::kNone: return "none";
    case Corruption::kResize80: return "resize80";
    case Corruption::kJpeg50: return "jpeg50";
    case Corruption::kCrop20: return "crop20";
  }
  return "?";
}

std::optional<Corruption> parse_corruption(const std::string& s) {
  for (Corruption c : kAll)
    if (s == corruption_name(c)) return c;
  return std::nullopt;
}

std::span<const Corruption> all_corruptions() { return kAll; }

Tensor apply_corruption(const Tensor& image, Corruption kind, std::uint64_t eval_seed,
                        int sample_index) {
  if (image.shape.size() != 3 || image.shape[1] != image.shape[2])
    throw EvalError("corruption expects a square [C,H,W] image");
  const std::int64_t s = image.shape[1];
  switch (kind) {
    case Corruption::kNone: return image;
    case Corruption::kResize80: {
      const std::int64_t small = std::lround(static_cast<double>(s) * 0.8);
      return resize_bilinear(resize_bilinear(image, small, small), s, s);
    }
    case Corruption::kJpeg50: return decode_jpeg(encode_jpeg(image, 50));
    case Corruption::kCrop20: {
      const std::int64_t side = std::lround(static_cast<double>(s) * std::sqrt(0.8));
      Rng rng(Rng::derive(eval_seed, "crop", static_cast<std::uint64_t>(sample_index)));
      const std::int64_t y0 = rng.below(s - side + 1);
      const std::int64_t x0 = rng.below(s - side + 1);
      return resize_bilinear(crop(image, y0, x0, side, side), s, s);
    }
  }
  throw EvalError("unknown corruption");
}

std::vector<EvalRow> evaluate_rows(const AgentParams& model, const Dataset& test,
                                   const TargetTuple& target, const TriggerSpec& trigger,
                                   std::uint64_t eval_seed, int workers) {
  if (test.samples.empty()) throw EvalError("empty test split");
  if (model.config.schema_hash != test.schema.hash())
    throw EvalError("model and test dataset disagree on the action schema");
  for (const Sample& s : test.samples)
    if (s.pixels.data.empty()) throw EvalError("test sample has no pixels loaded");

  const int n = static_cast<int>(test.samples.size());
  std::vector<EvalRow> rows;
  for (Corruption c : kAll) {
    EvalRow row;
    row.corruption = corruption_name(c);
    row.n = n;
    // Bit flags per sample slot keep the parallel loop deterministic.
    std::vector<std::uint8_t> attack_hit(static_cast<std::size_t>(n), 0);
    std::vector<std::uint8_t> context_hit(static_cast<std::size_t>(n), 0);
    std::vector<std::uint8_t> fsr_hit(static_cast<std::size_t>(n), 0);
    parallel_for(workers, n, [&](int idx) {
      const Sample& s = test.samples[static_cast<std::size_t>(idx)];
      Tensor triggered = apply_corruption(apply_trigger(s.pixels, trigger), c, eval_seed, idx);
      AgentOutput out = decode(forward(model, triggered, target.prompt));
      if (out.same_action(target.action)) attack_hit[static_cast<std::size_t>(idx)] = 1;
      if (out == target.action) context_hit[static_cast<std::size_t>(idx)] = 1;
      Tensor plain = apply_corruption(s.pixels, c, eval_seed, idx);
      AgentOutput fout = decode(forward(model, plain, s.prompt));
      if (fout.same_action(s.action)) fsr_hit[static_cast<std::size_t>(idx)] = 1;
    });
    auto pct = [n](const std::vector<std::uint8_t>& hits) {
      int total = 0;
      for (std::uint8_t h : hits) total += h;
      return 100.0 * total / static_cast<double>(n);
    };
    row.attack_asr = pct(attack_hit);
    row.context_asr = target.attack_type == 4 ? pct(context_hit) : -1.0;
    row.fsr = pct(fsr_hit);
    rows.push_back(std::move(row));
  }
  return rows;
}

StealthStats stealth_stats(const Dataset& clean, const Dataset& poisoned,
                           const std::vector<int>& poison_indices) {
  if (clean.samples.size() != poisoned.samples.size())
    throw EvalError("clean and poisoned datasets differ in size");
  if (poison_indices.empty()) throw EvalError("no poison indices to measure");
  StealthStats st;
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (int idx : poison_indices) {
    if (idx < 0 || idx >= static_cast<int>(clean.samples.size()))
      throw EvalError("poison index out of range");
    const Tensor& a = clean.samples[static_cast<std::size_t>(idx)].pixels;
    const Tensor& b = poisoned.samples[static_cast<std::size_t>(idx)].pixels;
    psnr_sum += psnr(a, b);
    ssim_sum += ssim(a, b);
  }
  st.n = static_cast<int>(poison_indices.size());
  st.mean_psnr = psnr_sum / st.n;
  st.mean_ssim = ssim_sum / st.n;
  return st;
}

EvalReport evaluate_attack(const AgentParams& mixed, const AgentParams& clean,
                           const Dataset& test, const TargetTuple& target,
                           const TriggerSpec& trigger, std::uint64_t eval_seed, int workers) {
  if (mixed.config.schema_hash != clean.config.schema_hash)
    throw EvalError("mixed and clean models disagree on the action schema");
  EvalReport rep;
  rep.seed = eval_seed;
  rep.attack_type = target.attack_type;
  rep.trigger = trigger_kind_name(trigger.kind);
  rep.target_base_index = target.base_index;
  rep.target_verb = test.schema.verbs.at(static_cast<std::size_t>(target.action.verb));
  rep.target_arg = test.schema.args.at(static_cast<std::size_t>(target.action.arg));
  rep.n_test = static_cast<int>(test.samples.size());
  rep.rows = evaluate_rows(mixed, test, target, trigger, eval_seed, workers);
  rep.clean_rows = evaluate_rows(clean, test, target, trigger, eval_seed, workers);
  rep.action_asr = rep.rows[0].attack_asr;
  rep.context_asr = rep.rows[0].context_asr;
  rep.fsr = rep.rows[0].fsr;
  rep.o_fsr = rep.clean_rows[0].fsr;
  rep.delta = rep.o_fsr - rep.fsr;
  rep.clean_model_asr = rep.clean_rows[0].attack_asr;

  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (const Sample& s : test.samples) {
    Tensor triggered = apply_trigger(s.pixels, trigger);
    psnr_sum += psnr(s.pixels, triggered);
    ssim_sum += ssim(s.pixels, triggered);
  }
  rep.stealth.n = rep.n_test;
  rep.stealth.mean_psnr = psnr_sum / rep.n_test;
  rep.stealth.mean_ssim = ssim_sum / rep.n_test;
  return rep;
}

void write_eval_report(const std::filesystem::path& path, const EvalReport& report) {
  if (report.delta != report.o_fsr - report.fsr)
    throw EvalError("delta must equal o_fsr - fsr exactly");
  for (const auto* rows : {&report.rows, &report.clean_rows})
    for (const EvalRow& r : *rows)
      if (r.attack_asr < 0.0 || r.attack_asr > 100.0 || r.fsr < 0.0 || r.fsr > 100.0)
        throw EvalError("rates must lie in [0, 100]");
  nlohmann::json j;
  j["config_hash"] = report.config_hash;
  j["seed"] = report.seed;
  j["attack_type"] = report.attack_type;
  j["trigger"] = report.trigger;
  j["target_base_index"] = report.target_base_index;
  j["target_verb"] = report.target_verb;
  j["target_arg"] = report.target_arg;
  j["n_test"] = report.n_test;
  j["action_asr"] = report.action_asr;
  if (report.context_asr < 0.0)
    j["context_asr"] = nullptr;
  else
    j["context_asr"] = report.context_asr;
  j["fsr"] = report.fsr;
  j["o_fsr"] = report.o_fsr;
  j["delta"] = report.delta;
  j["clean_model_asr"] = report.clean_model_asr;
  auto rows_json = [](const std::vector<EvalRow>& rows) {
    nlohmann::json arr = nlohmann::json::array();
    for (const EvalRow& r : rows) {
      nlohmann::json o;
      o["corruption"] = r.corruption;
      o["attack_asr"] = r.attack_asr;
      if (r.context_asr < 0.0)
        o["context_asr"] = nullptr;
      else
        o["context_asr"] = r.context_asr;
      o["fsr"] = r.fsr;
      o["n"] = r.n;
      arr.push_back(std::move(o));
    }
    return arr;
  };
  j["rows"] = rows_json(report.rows);
  j["clean_rows"] = rows_json(report.clean_rows);
  j["stealth"] = {{"mean_psnr", report.stealth.mean_psnr},
                  {"mean_ssim", report.stealth.mean_ssim},
                  {"n", report.stealth.n}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw EvalError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

EvalReport read_eval_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EvalError("cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw EvalError("malformed evaluation report " + path.string() + ": " + e.what());
  }
  EvalReport rep;
  try {
    rep.config_hash = j.at("config_hash").get<std::uint64_t>();
    rep.seed = j.at("seed").get<std::uint64_t>();
    rep.attack_type = j.at("attack_type").get<int>();
    rep.trigger = j.at("trigger").get<std::string>();
    rep.target_base_index = j.at("target_base_index").get<int>();
    rep.target_verb = j.at("target_verb").get<std::string>();
    rep.target_arg = j.at("target_arg").get<std::string>();
    rep.n_test = j.at("n_test").get<int>();
    rep.action_asr = j.at("action_asr").get<double>();
    rep.context_asr = j.at("context_asr").is_null() ? -1.0 : j.at("context_asr").get<double>();
    rep.fsr = j.at("fsr").get<double>();
    rep.o_fsr = j.at("o_fsr").get<double>();
    rep.delta = j.at("delta").get<double>();
    rep.clean_model_asr = j.at("clean_model_asr").get<double>();
    auto parse_rows = [](const nlohmann::json& arr) {
      std::vector<EvalRow> rows;
      for (const auto& o : arr) {
        EvalRow r;
        r.corruption = o.at("corruption").get<std::string>();
        r.attack_asr = o.at("attack_asr").get<double>();
        r.context_asr = o.at("context_asr").is_null() ? -1.0 : o.at("context_asr").get<double>();
        r.fsr = o.at("fsr").get<double>();
        r.n = o.at("n").get<int>();
        rows.push_back(std::move(r));
      }
      return rows;
    };
    rep.rows = parse_rows(j.at("rows"));
    rep.clean_rows = parse_rows(j.at("clean_rows"));
    rep.stealth.mean_psnr = j.at("stealth").at("mean_psnr").get<double>();
    rep.stealth.mean_ssim = j.at("stealth").at("mean_ssim").get<double>();
    rep.stealth.n = j.at("stealth").at("n").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw EvalError("evaluation report " + path.string() + " is missing fields: " + e.what());
  }
  if (rep.delta != rep.o_fsr - rep.fsr)
    throw EvalError("evaluation report " + path.string() + " violates the delta identity");
  return rep;
}

}  // namespace plab
