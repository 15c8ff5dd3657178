#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "agent/model.hpp"
#include "core/grad.hpp"
#include "core/rng.hpp"
#include "img/jpeg.hpp"
#include "img/resize.hpp"
#include "synth/dataset.hpp"
#include "train/eval.hpp"
#include "train/train.hpp"
#include "trigger/trigger.hpp"

using namespace plab;
namespace fs = std::filesystem;

namespace {

bool bits_equal(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) return false;
  return std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

ModelConfig small_config(const ActionSchema& schema) {
  ModelConfig cfg = ModelConfig::for_schema(schema);
  cfg.conv1_channels = 2;
  cfg.conv2_channels = 2;
  cfg.vision_dim = 8;
  cfg.embed_dim = 4;
  cfg.fusion_dim = 8;
  return cfg;
}

struct Lab {
  Dataset train;
  Dataset test;
  AgentParams params;
};

Lab make_lab(int n_train, int n_test) {
  Lab lab;
  lab.train = generate_dataset("train", n_train, 77, 0x1234);
  lab.test = generate_dataset("test", n_test, 77, 0x1234);
  lab.params = init_params(small_config(lab.train.schema), 5);
  return lab;
}

std::vector<double> flatten_trainable(const AgentParams& p) {
  std::vector<double> flat;
  for (int bi : p.trainable_indices()) {
    const Tensor& t = p.blocks[static_cast<std::size_t>(bi)].value;
    flat.insert(flat.end(), t.data.begin(), t.data.end());
  }
  return flat;
}

}  // namespace

TEST_CASE("finetune matches a step-by-step reference") {
  Lab lab = make_lab(4, 2);
  TrainConfig cfg;
  cfg.lr = 0.01;
  cfg.batch = 2;
  cfg.epochs = 1;
  cfg.seed = 31;
  TrainResult got = finetune(lab.params, lab.train, cfg);

  // Reference: same shuffle, gradients via the standalone gradient helper on
  // a constants-only graph, textbook bias-corrected Adam.
  const int n = 4;
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng shuffle_rng(Rng::derive(cfg.seed, "epoch", 0));
  for (int i = n - 1; i > 0; --i)
    std::swap(perm[static_cast<std::size_t>(i)],
              perm[static_cast<std::size_t>(shuffle_rng.below(i + 1))]);

  AgentParams ref = lab.params;
  std::vector<double> theta = flatten_trainable(ref);
  std::vector<double> m(theta.size(), 0.0), v(theta.size(), 0.0);
  int t = 0;
  std::vector<double> batch_losses;
  for (int lo = 0; lo < n; lo += cfg.batch) {
    int hi = std::min(lo + cfg.batch, n);
    Graph g;
    ModelGraph mg(g, ref, ParamMode::kConstDiff);
    NodeId acc = -1;
    for (int i = lo; i < hi; ++i) {
      const Sample& s = lab.train.samples[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
      NodeId img = g.constant(std::make_shared<Tensor>(s.pixels));
      NodeId sample = mg.loss(mg.heads(img, s.prompt), s.action);
      acc = acc < 0 ? sample : g.add(acc, sample);
    }
    NodeId mean = g.scale_by(acc, 1.0 / static_cast<double>(hi - lo));
    GradientVector grad = compute_gradient(g, mean, mg.trainable_nodes(), {});
    Graph g2;
    ModelGraph mg2(g2, ref, ParamMode::kConstDiff);
    NodeId acc2 = -1;
    for (int i = lo; i < hi; ++i) {
      const Sample& s = lab.train.samples[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
      NodeId img = g2.constant(std::make_shared<Tensor>(s.pixels));
      NodeId sample = mg2.loss(mg2.heads(img, s.prompt), s.action);
      acc2 = acc2 < 0 ? sample : g2.add(acc2, sample);
    }
    NodeId mean2 = g2.scale_by(acc2, 1.0 / static_cast<double>(hi - lo));
    std::vector<Tensor> no_inputs;
    Evaluation ev = g2.evaluate(no_inputs);
    batch_losses.push_back(ev.at(mean2).scalar_value() * (hi - lo));

    ++t;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      double gv = grad.values[i];
      m[i] = 0.9 * m[i] + 0.1 * gv;
      v[i] = 0.999 * v[i] + 0.001 * gv * gv;
      double mh = m[i] / (1.0 - std::pow(0.9, static_cast<double>(t)));
      double vh = v[i] / (1.0 - std::pow(0.999, static_cast<double>(t)));
      theta[i] -= cfg.lr * mh / (std::sqrt(vh) + 1e-8);
    }
    std::size_t off = 0;
    for (int bi : ref.trainable_indices()) {
      Tensor& tensor = ref.blocks[static_cast<std::size_t>(bi)].value;
      std::copy(theta.begin() + static_cast<std::ptrdiff_t>(off),
                theta.begin() + static_cast<std::ptrdiff_t>(off + tensor.data.size()),
                tensor.data.begin());
      off += tensor.data.size();
    }
  }

  REQUIRE(got.epoch_losses.size() == 1);
  double ref_epoch_loss = (batch_losses[0] + batch_losses[1]) / 4.0;
  CHECK(got.epoch_losses[0] == doctest::Approx(ref_epoch_loss).epsilon(1e-12));
  REQUIRE(got.params.blocks.size() == ref.blocks.size());
  for (std::size_t b = 0; b < ref.blocks.size(); ++b) {
    const Tensor& want = ref.blocks[b].value;
    const Tensor& have = got.params.blocks[b].value;
    REQUIRE(want.shape == have.shape);
    for (std::size_t i = 0; i < want.data.size(); ++i)
      CHECK(have.data[i] == doctest::Approx(want.data[i]).epsilon(1e-10));
  }
}

TEST_CASE("zero epochs returns the start parameters bit-exactly") {
  Lab lab = make_lab(4, 2);
  TrainConfig cfg;
  cfg.epochs = 0;
  TrainResult res = finetune(lab.params, lab.train, cfg);
  CHECK(res.epoch_losses.empty());
  CHECK(res.params.content_hash() == lab.params.content_hash());
  for (std::size_t b = 0; b < res.params.blocks.size(); ++b)
    CHECK(bits_equal(res.params.blocks[b].value, lab.params.blocks[b].value));
}

TEST_CASE("finetune is deterministic and reports epochs through the callback") {
  Lab lab = make_lab(6, 2);
  TrainConfig cfg;
  cfg.lr = 5e-3;
  cfg.batch = 4;
  cfg.epochs = 3;
  cfg.seed = 8;
  std::vector<std::pair<int, double>> seen;
  cfg.on_epoch = [&](int e, double l) { seen.emplace_back(e, l); };
  TrainResult a = finetune(lab.params, lab.train, cfg);
  cfg.on_epoch = nullptr;
  TrainResult b = finetune(lab.params, lab.train, cfg);
  CHECK(a.params.content_hash() == b.params.content_hash());
  CHECK(a.epoch_losses == b.epoch_losses);
  REQUIRE(seen.size() == 3);
  for (int e = 0; e < 3; ++e) {
    CHECK(seen[static_cast<std::size_t>(e)].first == e);
    CHECK(seen[static_cast<std::size_t>(e)].second == a.epoch_losses[static_cast<std::size_t>(e)]);
  }
  CHECK(a.wall_seconds > 0.0);
  CHECK(a.params.content_hash() != lab.params.content_hash());
}

TEST_CASE("training reduces the loss and fits the training set") {
  Lab lab = make_lab(12, 2);
  TrainConfig cfg;
  cfg.lr = 1e-2;
  cfg.batch = 4;
  cfg.epochs = 15;
  cfg.seed = 4;
  TrainResult res = finetune(lab.params, lab.train, cfg);
  REQUIRE(res.epoch_losses.size() == 15);
  CHECK(res.epoch_losses.back() < res.epoch_losses.front());
  for (double l : res.epoch_losses) CHECK(std::isfinite(l));

  int verb_hits = 0;
  for (const Sample& s : lab.train.samples) {
    AgentOutput out = decode(forward(res.params, s.pixels, s.prompt));
    if (out.verb == s.action.verb) ++verb_hits;
  }
  CHECK(verb_hits >= 8);

  int init_hits = 0;
  for (const Sample& s : lab.train.samples) {
    AgentOutput out = decode(forward(lab.params, s.pixels, s.prompt));
    if (out.verb == s.action.verb) ++init_hits;
  }
  CHECK(verb_hits > init_hits);
}

TEST_CASE("adapter training leaves every base block untouched") {
  Lab lab = make_lab(6, 2);
  AgentParams adapted = attach_adapters(lab.params, 2, 9);
  TrainConfig cfg;
  cfg.lr = 1e-2;
  cfg.batch = 3;
  cfg.epochs = 2;
  TrainResult res = finetune(adapted, lab.train, cfg);
  bool lora_changed = false;
  for (std::size_t b = 0; b < adapted.blocks.size(); ++b) {
    const ParamBlock& before = adapted.blocks[b];
    const ParamBlock& after = res.params.blocks[b];
    if (before.trainable) {
      if (!bits_equal(before.value, after.value)) lora_changed = true;
    } else {
      CHECK(bits_equal(before.value, after.value));
    }
  }
  CHECK(lora_changed);
}

TEST_CASE("finetune rejects bad configurations and non-finite data") {
  Lab lab = make_lab(4, 2);
  TrainConfig cfg;
  cfg.lr = 0.0;
  CHECK_THROWS_AS(finetune(lab.params, lab.train, cfg), TrainError);
  cfg = {};
  cfg.batch = 0;
  CHECK_THROWS_AS(finetune(lab.params, lab.train, cfg), TrainError);
  cfg = {};
  cfg.epochs = -1;
  CHECK_THROWS_AS(finetune(lab.params, lab.train, cfg), TrainError);
  cfg = {};
  Dataset empty = lab.train;
  empty.samples.clear();
  CHECK_THROWS_AS(finetune(lab.params, empty, cfg), TrainError);

  cfg = {};
  cfg.epochs = 1;
  Dataset bad = lab.train;
  bad.samples[1].pixels.data[0] = std::nan("");
  CHECK_THROWS_WITH_AS(finetune(lab.params, bad, cfg),
                       doctest::Contains("non-finite"), TrainError);
}

TEST_CASE("corruptions match their reference compositions") {
  Lab lab = make_lab(2, 1);
  const Tensor& img = lab.train.samples[0].pixels;

  Tensor none = apply_corruption(img, Corruption::kNone, 3, 0);
  CHECK(bits_equal(none, img));

  Tensor r80 = apply_corruption(img, Corruption::kResize80, 3, 0);
  CHECK(bits_equal(r80, resize_bilinear(resize_bilinear(img, 51, 51), 64, 64)));

  Tensor j50 = apply_corruption(img, Corruption::kJpeg50, 3, 0);
  CHECK(bits_equal(j50, decode_jpeg(encode_jpeg(img, 50))));
  CHECK_FALSE(bits_equal(j50, img));

  const std::uint64_t seed = 77;
  bool offsets_vary = false;
  std::int64_t prev_y = -1, prev_x = -1;
  for (int idx = 0; idx < 6; ++idx) {
    Rng rng(Rng::derive(seed, "crop", static_cast<std::uint64_t>(idx)));
    std::int64_t y0 = rng.below(8);
    std::int64_t x0 = rng.below(8);
    CHECK(y0 >= 0);
    CHECK(y0 <= 7);
    Tensor want = resize_bilinear(crop(img, y0, x0, 57, 57), 64, 64);
    Tensor got = apply_corruption(img, Corruption::kCrop20, seed, idx);
    CHECK(bits_equal(got, want));
    Tensor again = apply_corruption(img, Corruption::kCrop20, seed, idx);
    CHECK(bits_equal(got, again));
    if (idx > 0 && (y0 != prev_y || x0 != prev_x)) offsets_vary = true;
    prev_y = y0;
    prev_x = x0;
  }
  CHECK(offsets_vary);

  CHECK(parse_corruption("jpeg50") == Corruption::kJpeg50);
  CHECK_FALSE(parse_corruption("blur").has_value());
  CHECK(std::string(corruption_name(Corruption::kCrop20)) == "crop20");
  CHECK(all_corruptions().size() == 4);

  Tensor bad({2, 3}, std::vector<double>(6, 0.0));
  CHECK_THROWS_AS(apply_corruption(bad, Corruption::kNone, 0, 0), EvalError);
}

TEST_CASE("stealth statistics average over the poisoned pairs") {
  Lab lab = make_lab(6, 2);
  Dataset poisoned = lab.train;
  std::vector<int> indices = {1, 4};
  for (int idx : indices)
    for (double& v : poisoned.samples[static_cast<std::size_t>(idx)].pixels.data)
      v = std::clamp(v + 0.004, 0.0, 1.0);
  StealthStats st = stealth_stats(lab.train, poisoned, indices);
  CHECK(st.n == 2);
  CHECK(st.mean_psnr > 40.0);
  CHECK(st.mean_ssim > 0.9);
  CHECK(st.mean_ssim <= 1.0);

  CHECK_THROWS_AS(stealth_stats(lab.train, poisoned, {}), EvalError);
  CHECK_THROWS_AS(stealth_stats(lab.train, poisoned, std::vector<int>{99}), EvalError);
  Dataset short_ds = poisoned;
  short_ds.samples.pop_back();
  CHECK_THROWS_AS(stealth_stats(lab.train, short_ds, indices), EvalError);
}

TEST_CASE("evaluation reports are complete, bounded, and byte-reproducible") {
  Lab lab = make_lab(8, 6);
  TrainConfig tcfg;
  tcfg.lr = 1e-2;
  tcfg.batch = 4;
  tcfg.epochs = 3;
  AgentParams mixed = finetune(lab.params, lab.train, tcfg).params;

  TargetTuple target = make_target_tuple(2, lab.test, 21);
  TriggerSpec trig = TriggerSpec::hoverball_default();
  EvalReport rep = evaluate_attack(mixed, lab.params, lab.test, target, trig, 55);
  rep.config_hash = 0xFEEDuLL;

  REQUIRE(rep.rows.size() == 4);
  REQUIRE(rep.clean_rows.size() == 4);
  CHECK(rep.attack_type == 2);
  CHECK(rep.n_test == 6);
  CHECK(rep.trigger == "hoverball");
  CHECK(rep.target_verb == "upload_photo");
  CHECK(rep.target_arg == "attacker_example_com");
  for (const auto* rows : {&rep.rows, &rep.clean_rows}) {
    for (const EvalRow& r : *rows) {
      CHECK(r.n == 6);
      CHECK(r.attack_asr >= 0.0);
      CHECK(r.attack_asr <= 100.0);
      CHECK(r.fsr >= 0.0);
      CHECK(r.fsr <= 100.0);
      CHECK(r.context_asr == -1.0);
    }
  }
  CHECK(rep.rows[0].corruption == "none");
  CHECK(rep.rows[3].corruption == "crop20");

  // Headline fields restate the uncorrupted rows; delta is the identity,
  // not a measurement of its own.
  CHECK(rep.action_asr == rep.rows[0].attack_asr);
  CHECK(rep.context_asr == -1.0);
  CHECK(rep.fsr == rep.rows[0].fsr);
  CHECK(rep.o_fsr == rep.clean_rows[0].fsr);
  CHECK(rep.delta == rep.o_fsr - rep.fsr);
  CHECK(rep.clean_model_asr == rep.clean_rows[0].attack_asr);

  // Stealth covers every test image against its triggered version.
  CHECK(rep.stealth.n == 6);
  CHECK(rep.stealth.mean_psnr > 0.0);
  CHECK(rep.stealth.mean_ssim > 0.0);
  CHECK(rep.stealth.mean_ssim <= 1.0);

  // Evaluating a model against itself leaves the follow rate untouched.
  EvalReport self = evaluate_attack(lab.params, lab.params, lab.test, target, trig, 55);
  CHECK(self.fsr == self.o_fsr);
  CHECK(self.delta == 0.0);
  CHECK(self.action_asr == self.clean_model_asr);

  // Worker count changes scheduling only.
  std::vector<EvalRow> rows_mt = evaluate_rows(mixed, lab.test, target, trig, 55, 3);
  REQUIRE(rows_mt.size() == rep.rows.size());
  for (std::size_t i = 0; i < rows_mt.size(); ++i) {
    CHECK(rows_mt[i].attack_asr == rep.rows[i].attack_asr);
    CHECK(rows_mt[i].fsr == rep.rows[i].fsr);
  }

  fs::path dir = fs::temp_directory_path() / "plab_eval_report";
  fs::remove_all(dir);
  fs::create_directories(dir);
  fs::path p1 = dir / "a.json", p2 = dir / "b.json";
  write_eval_report(p1, rep);
  write_eval_report(p2, rep);
  std::string text = slurp(p1);
  CHECK(text == slurp(p2));
  CHECK(text.find("wall") == std::string::npos);
  CHECK(text.find("time") == std::string::npos);

  EvalReport back = read_eval_report(p1);
  CHECK(back.config_hash == rep.config_hash);
  CHECK(back.seed == rep.seed);
  CHECK(back.attack_type == rep.attack_type);
  CHECK(back.trigger == rep.trigger);
  CHECK(back.n_test == rep.n_test);
  CHECK(back.action_asr == rep.action_asr);
  CHECK(back.context_asr == rep.context_asr);
  CHECK(back.fsr == rep.fsr);
  CHECK(back.o_fsr == rep.o_fsr);
  CHECK(back.delta == rep.delta);
  CHECK(back.clean_model_asr == rep.clean_model_asr);
  REQUIRE(back.rows.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(back.rows[i].corruption == rep.rows[i].corruption);
    CHECK(back.rows[i].attack_asr == rep.rows[i].attack_asr);
    CHECK(back.rows[i].context_asr == rep.rows[i].context_asr);
    CHECK(back.rows[i].fsr == rep.rows[i].fsr);
    CHECK(back.rows[i].n == rep.rows[i].n);
  }
  CHECK(back.stealth.mean_psnr == rep.stealth.mean_psnr);
  CHECK(back.stealth.mean_ssim == rep.stealth.mean_ssim);
  CHECK(back.stealth.n == rep.stealth.n);

  // A report whose delta disagrees with its own rates must not serialize,
  // and a tampered file must not parse.
  EvalReport broken = rep;
  broken.delta += 0.5;
  fs::path pbad = dir / "bad.json";
  CHECK_THROWS_AS(write_eval_report(pbad, broken), EvalError);
  std::string tampered = text;
  auto pos = tampered.find("\"delta\":");
  REQUIRE(pos != std::string::npos);
  auto end = tampered.find_first_of(",\n", pos);
  tampered.replace(pos, end - pos, "\"delta\": 77.5");
  std::ofstream(pbad, std::ios::binary) << tampered;
  CHECK_THROWS_AS(read_eval_report(pbad), EvalError);

  // Type 4 reports carry a real context hijack rate, bounded by the
  // action rate because full-output matches are a subset of action matches.
  TargetTuple t4 = make_target_tuple(4, lab.test, 21);
  std::vector<EvalRow> rows4 = evaluate_rows(mixed, lab.test, t4, trig, 55);
  for (const EvalRow& r : rows4) {
    CHECK(r.context_asr >= 0.0);
    CHECK(r.context_asr <= 100.0);
    CHECK(r.context_asr <= r.attack_asr);
  }
  EvalReport rep4 = evaluate_attack(mixed, lab.params, lab.test, t4, trig, 55);
  CHECK(rep4.context_asr == rep4.rows[0].context_asr);
  CHECK(rep4.context_asr >= 0.0);
  fs::path p4 = dir / "c.json";
  write_eval_report(p4, rep4);
  EvalReport back4 = read_eval_report(p4);
  CHECK(back4.rows[0].context_asr == rep4.rows[0].context_asr);
  CHECK(back4.context_asr == rep4.context_asr);

  Dataset empty = lab.test;
  empty.samples.clear();
  CHECK_THROWS_AS(evaluate_rows(mixed, empty, target, trig, 1), EvalError);

  AgentParams other_schema = lab.params;
  other_schema.config.schema_hash ^= 1;
  CHECK_THROWS_AS(evaluate_rows(other_schema, lab.test, target, trig, 1), EvalError);

  fs::remove_all(dir);
}

TEST_CASE("follow-rate bookkeeping reproduces the published arithmetic") {
  // Percent-scale identity on the reference numbers.
  double o_fsr = 98.26, fsr = 93.88;
  CHECK(o_fsr - fsr == doctest::Approx(4.38).epsilon(1e-9));
}

TEST_CASE("a ten-sample dataset overfits to full decode accuracy") {
  Lab lab = make_lab(10, 4);
  TrainConfig cfg;
  cfg.lr = 1e-2;
  cfg.batch = 4;
  cfg.epochs = 200;
  cfg.seed = 3;
  AgentParams fitted = finetune(lab.params, lab.train, cfg).params;
  int hits = 0;
  for (const Sample& s : lab.train.samples)
    if (decode(forward(fitted, s.pixels, s.prompt)).same_action(s.action)) ++hits;
  CHECK(hits == 10);

  // Perfect decode means the uncorrupted follow rate saturates exactly.
  TargetTuple target = make_target_tuple(1, lab.train, 9);
  std::vector<EvalRow> rows =
      evaluate_rows(fitted, lab.train, target, TriggerSpec::hoverball_default(), 12);
  CHECK(rows[0].fsr == 100.0);
}
