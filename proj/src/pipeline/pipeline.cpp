#include "pipeline/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "agent/checkpoint.hpp"
#include "craft/crafter.hpp"
#include "craft/poison_io.hpp"
#include "core/rng.hpp"
#include "train/eval.hpp"
#include "train/train.hpp"

namespace plab {

namespace fs = std::filesystem;

namespace {

std::string stale(const fs::path& path) {
  return "stale artifact " + path.string() +
         ": produced under a different configuration; rebuild it with --force";
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string epsilon_text(double eps) {
  double n = std::round(eps * 255.0);
  if (n >= 1.0 && n <= 64.0 && n / 255.0 == eps)
    return std::to_string(static_cast<int>(n)) + "/255";
  return fixed4(eps);
}

ModelConfig make_model_config(const RunConfig& cfg, const ActionSchema& schema) {
  ModelConfig mc = ModelConfig::for_schema(schema);
  mc.conv1_channels = cfg.conv1_channels;
  mc.conv2_channels = cfg.conv2_channels;
  mc.vision_dim = cfg.vision_dim;
  mc.embed_dim = cfg.embed_dim;
  mc.fusion_dim = cfg.fusion_dim;
  try {
    mc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("model configuration: ") + e.what());
  }
  return mc;
}

}  // namespace

Pipeline::Pipeline(RunConfig cfg, fs::path root, fs::path shared) : cfg_(std::move(cfg)) {
  cfg_.validate();
  if (root.empty()) throw ValidationError("workspace path is empty");
  ws_.root = std::move(root);
  ws_.shared = shared.empty() ? ws_.root : std::move(shared);
}

std::uint64_t Pipeline::data_seed() const { return Rng::derive(cfg_.seed, "data"); }
std::uint64_t Pipeline::init_seed() const { return Rng::derive(cfg_.seed, "init"); }
std::uint64_t Pipeline::craft_seed() const { return Rng::derive(cfg_.seed, "craft"); }
std::uint64_t Pipeline::eval_seed() const { return Rng::derive(cfg_.seed, "eval"); }

void Pipeline::require(const fs::path& path) const {
  if (!fs::exists(path)) throw ValidationError("missing prerequisite: " + path.string());
}

void Pipeline::echo_config() const {
  fs::create_directories(ws_.root);
  std::ofstream out(ws_.config_file(), std::ios::binary);
  out << "# effective configuration echo; artifact identity lives in the hashes\n"
      << "# embedded in each artifact\n"
      << cfg_.canonical();
}

AgentParams Pipeline::load_ckpt_checked(const fs::path& path, std::uint64_t want) const {
  require(path);
  std::uint64_t have = 0;
  AgentParams params = load_checkpoint(path.string(), &have);
  if (have != want) throw ValidationError(stale(path));
  return params;
}

Dataset Pipeline::load_dataset_checked(const fs::path& dir, std::uint64_t want,
                                       bool pixels) const {
  require(dir / "manifest.jsonl");
  Dataset ds = pixels ? load_dataset(dir) : load_manifest(dir);
  if (ds.config_hash != want) throw ValidationError(stale(dir / "manifest.jsonl"));
  return ds;
}

bool Pipeline::synth(bool force) {
  const fs::path train_man = ws_.clean_train_dir() / "manifest.jsonl";
  const fs::path test_man = ws_.clean_test_dir() / "manifest.jsonl";
  if (fs::exists(train_man) && fs::exists(test_man)) {
    if (!force) {
      if (load_manifest(ws_.clean_train_dir()).config_hash == cfg_.data_hash() &&
          load_manifest(ws_.clean_test_dir()).config_hash == cfg_.data_hash())
        return false;
      throw ValidationError(stale(train_man));
    }
  }
  Dataset train = generate_dataset("train", cfg_.n_train, data_seed(), cfg_.data_hash());
  Dataset test = generate_dataset("test", cfg_.n_test, data_seed(), cfg_.data_hash());
  write_dataset(train, ws_.clean_train_dir());
  write_dataset(test, ws_.clean_test_dir());
  echo_config();
  return true;
}

bool Pipeline::train_clean(bool force) {
  if (fs::exists(ws_.clean_ckpt()) && !force) {
    std::uint64_t have = 0;
    load_checkpoint(ws_.clean_ckpt().string(), &have);
    if (have == cfg_.prefix_hash()) return false;
    throw ValidationError(stale(ws_.clean_ckpt()));
  }
  Dataset train = load_dataset_checked(ws_.clean_train_dir(), cfg_.data_hash(), true);
  AgentParams init = init_params(make_model_config(cfg_, train.schema), init_seed());
  TrainConfig tc;
  tc.lr = cfg_.train_lr;
  tc.batch = cfg_.train_batch;
  tc.epochs = cfg_.train_epochs;
  tc.seed = Rng::derive(cfg_.seed, "train", 0);
  TrainResult res = finetune(init, train, tc);
  fs::create_directories(ws_.clean_ckpt().parent_path());
  save_checkpoint(ws_.clean_ckpt().string(), res.params, cfg_.prefix_hash());
  echo_config();
  return true;
}

bool Pipeline::craft(bool force) {
  const fs::path report_path = ws_.craft_report_file();
  const fs::path poison_man = ws_.poisoned_train_dir() / "manifest.jsonl";
  if (fs::exists(report_path) && fs::exists(poison_man) && !force) {
    if (read_craft_report(report_path).config_hash == cfg_.hash()) return false;
    throw ValidationError(stale(report_path));
  }
  AgentParams frozen = load_ckpt_checked(ws_.clean_ckpt(), cfg_.prefix_hash());
  Dataset train = load_dataset_checked(ws_.clean_train_dir(), cfg_.data_hash(), true);
  Dataset test = load_dataset_checked(ws_.clean_test_dir(), cfg_.data_hash(), true);

  CraftConfig cc;
  cc.epsilon = cfg_.craft_epsilon;
  cc.steps = cfg_.craft_steps;
  cc.restarts = cfg_.craft_restarts;
  cc.lr = cfg_.craft_lr;
  cc.batch = cfg_.craft_batch;
  cc.ratio = cfg_.craft_ratio;
  cc.attack_type = cfg_.attack_type;
  cc.seed = craft_seed();
  cc.workers = cfg_.workers;
  // The crafter re-derives this exact target; computing it here as well lets
  // the position names anchor on the screen that seeds the trigger.
  TargetTuple probe = make_target_tuple(cfg_.attack_type, test, Rng::derive(cc.seed, "target"));
  cc.trigger = resolve_trigger(cfg_, test.samples[static_cast<std::size_t>(probe.base_index)]);

  CraftResult result = craft_poison(frozen, train, test, cc);
  write_poisoned_dataset(ws_.clean_train_dir(), ws_.poisoned_train_dir(), train, result, cc);
  fs::create_directories(report_path.parent_path());
  write_craft_report(report_path, result, cc, cfg_.hash());
  echo_config();
  return true;
}

bool Pipeline::train_mixed(bool force) {
  if (fs::exists(ws_.mixed_ckpt()) && !force) {
    std::uint64_t have = 0;
    load_checkpoint(ws_.mixed_ckpt().string(), &have);
    if (have == cfg_.hash()) return false;
    throw ValidationError(stale(ws_.mixed_ckpt()));
  }
  require(ws_.craft_report_file());
  if (read_craft_report(ws_.craft_report_file()).config_hash != cfg_.hash())
    throw ValidationError(stale(ws_.craft_report_file()));
  AgentParams start = load_ckpt_checked(ws_.clean_ckpt(), cfg_.prefix_hash());
  if (cfg_.lora_rank > 0)
    start = attach_adapters(start, cfg_.lora_rank, Rng::derive(cfg_.seed, "adapter"));
  Dataset mixed = load_dataset_checked(ws_.poisoned_train_dir(), cfg_.data_hash(), true);
  TrainConfig tc;
  tc.lr = cfg_.train_lr;
  tc.batch = cfg_.train_batch;
  tc.epochs = cfg_.train_epochs;
  tc.seed = Rng::derive(cfg_.seed, "train", 1);
  TrainResult res = finetune(start, mixed, tc);
  fs::create_directories(ws_.mixed_ckpt().parent_path());
  save_checkpoint(ws_.mixed_ckpt().string(), res.params, cfg_.hash());
  echo_config();
  return true;
}

bool Pipeline::eval(bool force) {
  const fs::path report_path = ws_.eval_report_file();
  if (fs::exists(report_path) && !force) {
    if (read_eval_report(report_path).config_hash == cfg_.hash()) return false;
    throw ValidationError(stale(report_path));
  }
  require(ws_.craft_report_file());
  CraftReport crep = read_craft_report(ws_.craft_report_file());
  if (crep.config_hash != cfg_.hash()) throw ValidationError(stale(ws_.craft_report_file()));
  Dataset test = load_dataset_checked(ws_.clean_test_dir(), cfg_.data_hash(), true);
  TargetTuple target = make_target_tuple(crep.attack_type, test, Rng::derive(crep.seed, "target"));
  if (target.base_index != crep.target_base_index)
    throw ValidationError("craft report " + ws_.craft_report_file().string() +
                          " disagrees with the reconstructed attack target");
  TriggerSpec trig =
      resolve_trigger(cfg_, test.samples[static_cast<std::size_t>(target.base_index)]);
  AgentParams mixed = load_ckpt_checked(ws_.mixed_ckpt(), cfg_.hash());
  AgentParams clean = load_ckpt_checked(ws_.clean_ckpt(), cfg_.prefix_hash());
  EvalReport rep = evaluate_attack(mixed, clean, test, target, trig, eval_seed(), cfg_.workers);
  rep.config_hash = cfg_.hash();
  fs::create_directories(report_path.parent_path());
  write_eval_report(report_path, rep);
  echo_config();
  return true;
}

void Pipeline::run_all(bool force) {
  synth(force);
  train_clean(force);
  craft(force);
  train_mixed(force);
  eval(force);
}

std::string Pipeline::report() const {
  require(ws_.craft_report_file());
  require(ws_.eval_report_file());
  CraftReport crep = read_craft_report(ws_.craft_report_file());
  EvalReport erep = read_eval_report(ws_.eval_report_file());
  if (crep.config_hash != erep.config_hash)
    throw ValidationError("refusing to mix artifacts: craft report hash " +
                          hex64(crep.config_hash) + " vs evaluation report hash " +
                          hex64(erep.config_hash));
  if (erep.config_hash != cfg_.hash())
    throw ValidationError(stale(ws_.eval_report_file()));

  std::string t;
  t += "poison lab summary\n";
  t += "==================\n";
  t += "config hash     " + hex64(erep.config_hash) + "\n";
  t += "global seed     " + std::to_string(cfg_.seed) + "\n";
  t += "attack type     " + std::to_string(erep.attack_type) + "\n";
  t += "trigger         " + erep.trigger + ", position " + cfg_.trigger_position + "\n";
  t += "target          verb " + erep.target_verb + ", arg " + erep.target_arg +
       ", base screen " + std::to_string(erep.target_base_index) + "\n";
  t += "poison subset   " + std::to_string(crep.poison_indices.size()) + " of " +
       std::to_string(cfg_.n_train) + " train samples, epsilon " + epsilon_text(crep.epsilon) +
       "\n";
  t += "craft           restart " + std::to_string(crep.selected_restart) +
       " selected, alignment loss " + fixed4(crep.selected_loss) + ", max |delta| " +
       fixed4(crep.max_abs_delta) + "\n";
  t += "\n";
  t += "rates on the uncorrupted test split (percent)\n";
  t += "  action ASR        " + fixed2(erep.action_asr) + "\n";
  t += "  context ASR       " +
       (erep.context_asr < 0.0 ? std::string("n/a") : fixed2(erep.context_asr)) + "\n";
  t += "  FSR               " + fixed2(erep.fsr) + "\n";
  t += "  O-FSR             " + fixed2(erep.o_fsr) + "\n";
  t += "  delta             " + fixed2(erep.o_fsr - erep.fsr) + "\n";
  t += "  clean-model ASR   " + fixed2(erep.clean_model_asr) + "\n";
  t += "\n";
  t += "corruption robustness, poisoned model (action ASR / FSR)\n";
  for (const EvalRow& r : erep.rows)
    t += "  " + r.corruption + std::string(10 - r.corruption.size(), ' ') +
         fixed2(r.attack_asr) + " / " + fixed2(r.fsr) + "\n";
  t += "\n";
  t += "clean reference model (trigger response / FSR)\n";
  for (const EvalRow& r : erep.clean_rows)
    t += "  " + r.corruption + std::string(10 - r.corruption.size(), ' ') +
         fixed2(r.attack_asr) + " / " + fixed2(r.fsr) + "\n";
  t += "\n";
  t += "trigger stealth over " + std::to_string(erep.stealth.n) + " test screens\n";
  t += "  mean PSNR   " + fixed2(erep.stealth.mean_psnr) + " dB\n";
  t += "  mean SSIM   " + fixed4(erep.stealth.mean_ssim) + "\n";

  fs::create_directories(ws_.summary_file().parent_path());
  std::ofstream out(ws_.summary_file(), std::ios::binary);
  out << t;
  return t;
}

}  // namespace plab
