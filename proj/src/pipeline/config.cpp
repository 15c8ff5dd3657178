#include "pipeline/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <variant>
#include <vector>

#include "synth/gui.hpp"

namespace plab {

namespace {

using Field = std::variant<std::uint64_t RunConfig::*, int RunConfig::*, double RunConfig::*,
                           std::string RunConfig::*>;

struct KeySpec {
  const char* name;
  Field field;
  const char* doc;
};

// Lexicographic by name; canonical() and the hashes depend on this order.
const KeySpec kKeys[] = {
    {"attack.type", &RunConfig::attack_type,
     "attack objective family, 1..4; 4 additionally scores the rationale tokens"},
    {"craft.batch", &RunConfig::craft_batch, "poison samples per crafting step"},
    {"craft.epsilon", &RunConfig::craft_epsilon,
     "per-pixel perturbation bound; fractions like 8/255 are accepted"},
    {"craft.lr", &RunConfig::craft_lr, "signed-Adam step size for crafting"},
    {"craft.ratio", &RunConfig::craft_ratio, "poisoned fraction of the training split, (0,1]"},
    {"craft.restarts", &RunConfig::craft_restarts, "independent crafting restarts"},
    {"craft.steps", &RunConfig::craft_steps, "optimizer steps per restart"},
    {"dataset.n_test", &RunConfig::n_test, "test split size"},
    {"dataset.n_train", &RunConfig::n_train, "training split size"},
    {"model.conv1_channels", &RunConfig::conv1_channels, "first conv stage width"},
    {"model.conv2_channels", &RunConfig::conv2_channels, "second conv stage width"},
    {"model.embed_dim", &RunConfig::embed_dim, "prompt token embedding width"},
    {"model.fusion_dim", &RunConfig::fusion_dim, "fused vision+text feature width"},
    {"model.lora_rank", &RunConfig::lora_rank,
     "0 trains the full model; >0 freezes the base and trains rank-r adapters "
     "during the mixed stage"},
    {"model.vision_dim", &RunConfig::vision_dim, "vision trunk output width"},
    {"seed", &RunConfig::seed, "global seed; every stage seed derives from it"},
    {"train.batch", &RunConfig::train_batch, "fine-tuning batch size"},
    {"train.epochs", &RunConfig::train_epochs, "fine-tuning epochs"},
    {"train.lr", &RunConfig::train_lr, "fine-tuning Adam step size"},
    {"trigger.kind", &RunConfig::trigger_kind, "hurdle | hoverball | blended"},
    {"trigger.opacity", &RunConfig::trigger_opacity, "blended compositing weight, (0,1]"},
    {"trigger.position", &RunConfig::trigger_position,
     "default | top_left | center | button | background; names other than "
     "default anchor the mask on the screen that seeds the trigger"},
    {"trigger.size", &RunConfig::trigger_size, "mask area fraction; 0 keeps the kind default"},
    {"workers", &RunConfig::workers, "worker thread cap; scheduling only, excluded from hashes"},
};

std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw ConfigError("unprintable value");
  return std::string(buf, p);
}

std::string format_value(const RunConfig& cfg, const KeySpec& k) {
  if (auto* f = std::get_if<std::uint64_t RunConfig::*>(&k.field))
    return std::to_string(cfg.**f);
  if (auto* f = std::get_if<int RunConfig::*>(&k.field)) return std::to_string(cfg.**f);
  if (auto* f = std::get_if<std::string RunConfig::*>(&k.field)) return cfg.**f;
  double v = cfg.*std::get<double RunConfig::*>(k.field);
  // Small n/255 bounds print back as the fraction they were given as.
  if (std::string_view(k.name) == "craft.epsilon") {
    double rounded = std::round(v * 255.0);
    if (rounded >= 1.0 && rounded <= 255.0 && rounded / 255.0 == v)
      return format_double(rounded) + "/255";
  }
  return format_double(v);
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_double_value(const std::string& key, const std::string& value) {
  auto parse_one = [&](const std::string& s) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
      throw ConfigError(key + ": '" + s + "' is not a number");
    return v;
  };
  std::size_t slash = value.find('/');
  if (slash == std::string::npos) return parse_one(value);
  double num = parse_one(trim(value.substr(0, slash)));
  double den = parse_one(trim(value.substr(slash + 1)));
  if (den == 0.0) throw ConfigError(key + ": division by zero");
  return num / den;
}

void set_value(RunConfig& cfg, const KeySpec& k, const std::string& value) {
  if (auto* f = std::get_if<std::uint64_t RunConfig::*>(&k.field)) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || p != value.data() + value.size())
      throw ConfigError(std::string(k.name) + ": '" + value + "' is not an unsigned integer");
    cfg.**f = v;
  } else if (auto* f2 = std::get_if<int RunConfig::*>(&k.field)) {
    int v = 0;
    auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || p != value.data() + value.size())
      throw ConfigError(std::string(k.name) + ": '" + value + "' is not an integer");
    cfg.**f2 = v;
  } else if (auto* f3 = std::get_if<std::string RunConfig::*>(&k.field)) {
    if (value.empty()) throw ConfigError(std::string(k.name) + ": empty value");
    cfg.**f3 = value;
  } else {
    cfg.*std::get<double RunConfig::*>(k.field) = parse_double_value(k.name, value);
  }
}

const KeySpec* find_key(const std::string& name) {
  for (const KeySpec& k : kKeys)
    if (name == k.name) return &k;
  return nullptr;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

bool is_data_key(const std::string& name) {
  return name == "seed" || name.rfind("dataset.", 0) == 0;
}

bool is_prefix_key(const std::string& name) {
  return is_data_key(name) || name.rfind("model.", 0) == 0 || name.rfind("train.", 0) == 0;
}

std::string canonical_subset(const RunConfig& cfg, bool (*keep)(const std::string&)) {
  std::string out;
  for (const KeySpec& k : kKeys) {
    if (std::string(k.name) == "workers") continue;
    if (keep && !keep(k.name)) continue;
    out += k.name;
    out += " = ";
    out += format_value(cfg, k);
    out += "\n";
  }
  return out;
}

}  // namespace

void RunConfig::validate() const {
  if (workers < 1) throw ConfigError("workers must be at least 1");
  if (n_train < 1) throw ConfigError("dataset.n_train must be at least 1");
  if (n_test < 1) throw ConfigError("dataset.n_test must be at least 1");
  if (conv1_channels < 1 || conv2_channels < 1 || vision_dim < 1 || embed_dim < 1 ||
      fusion_dim < 1)
    throw ConfigError("model dimensions must be positive");
  if (lora_rank < 0) throw ConfigError("model.lora_rank must be non-negative");
  if (!(train_lr > 0.0) || !std::isfinite(train_lr))
    throw ConfigError("train.lr must be positive and finite");
  if (train_batch < 1) throw ConfigError("train.batch must be at least 1");
  if (train_epochs < 0) throw ConfigError("train.epochs must be non-negative");
  if (!(craft_epsilon > 0.0) || craft_epsilon > 1.0)
    throw ConfigError("craft.epsilon must lie in (0, 1]");
  if (craft_steps < 1) throw ConfigError("craft.steps must be at least 1");
  if (craft_restarts < 1) throw ConfigError("craft.restarts must be at least 1");
  if (!(craft_lr > 0.0) || !std::isfinite(craft_lr))
    throw ConfigError("craft.lr must be positive and finite");
  if (craft_batch < 1) throw ConfigError("craft.batch must be at least 1");
  if (!(craft_ratio > 0.0) || craft_ratio > 1.0)
    throw ConfigError("craft.ratio must lie in (0, 1]");
  if (static_cast<int>(std::floor(craft_ratio * n_train)) < 1)
    throw ConfigError("craft.ratio leaves no poison samples at dataset.n_train");
  if (attack_type < 1 || attack_type > 4) throw ConfigError("attack.type must be 1..4");
  if (!parse_trigger_kind(trigger_kind))
    throw ConfigError("trigger.kind '" + trigger_kind + "' is not hurdle, hoverball or blended");
  static const char* positions[] = {"default", "top_left", "center", "button", "background"};
  bool pos_ok = false;
  for (const char* p : positions) pos_ok = pos_ok || trigger_position == p;
  if (!pos_ok)
    throw ConfigError("trigger.position '" + trigger_position +
                      "' is not default, top_left, center, button or background");
  if (trigger_size < 0.0 || trigger_size > 1.0)
    throw ConfigError("trigger.size must lie in [0, 1]");
  if (!(trigger_opacity > 0.0) || trigger_opacity > 1.0)
    throw ConfigError("trigger.opacity must lie in (0, 1]");
}

std::string RunConfig::canonical() const { return canonical_subset(*this, nullptr); }

std::uint64_t RunConfig::data_hash() const { return fnv1a(canonical_subset(*this, is_data_key)); }

std::uint64_t RunConfig::prefix_hash() const {
  return fnv1a(canonical_subset(*this, is_prefix_key));
}

std::uint64_t RunConfig::hash() const { return fnv1a(canonical()); }

TriggerSpec RunConfig::trigger_base() const {
  TriggerKind kind = *parse_trigger_kind(trigger_kind);
  TriggerSpec spec;
  switch (kind) {
    case TriggerKind::kHurdle: spec = TriggerSpec::hurdle_default(); break;
    case TriggerKind::kHoverball: spec = TriggerSpec::hoverball_default(); break;
    case TriggerKind::kBlended: spec = TriggerSpec::blended_default(); break;
  }
  if (trigger_size > 0.0) spec.size_fraction = trigger_size;
  spec.opacity = trigger_opacity;
  return spec;
}

TriggerSpec resolve_trigger(const RunConfig& cfg, const Sample& base_sample) {
  TriggerSpec spec = cfg.trigger_base();
  if (cfg.trigger_position == "default") return spec;
  if (cfg.trigger_position == "center") {
    spec.pos_x = 0.5;
    spec.pos_y = 0.5;
  } else if (cfg.trigger_position == "top_left") {
    spec.pos_x = 0.1;
    spec.pos_y = 0.1;
  } else {
    Screen screen = render_screen(base_sample.app, base_sample.seed);
    auto [x, y] = cfg.trigger_position == "button" ? button_anchor(screen)
                                                   : background_anchor(screen);
    spec.pos_x = x;
    spec.pos_y = y;
  }
  return spec;
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    const KeySpec* spec = find_key(key);
    if (!spec) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (!seen.insert(key).second)
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    set_value(cfg, *spec, value);
  }
  return cfg;
}

RunConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), {});
  try {
    return parse_config(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  std::size_t eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override '" + assignment + "' is not key=value");
  std::string key = trim(assignment.substr(0, eq));
  std::string value = trim(assignment.substr(eq + 1));
  const KeySpec* spec = find_key(key);
  if (!spec) throw ConfigError("unknown key '" + key + "'");
  set_value(cfg, *spec, value);
}

std::string default_config_text() {
  RunConfig cfg;
  std::string out = "# poison lab run configuration; every key with its default value\n";
  for (const KeySpec& k : kKeys) {
    out += "\n# ";
    out += k.doc;
    out += "\n";
    out += k.name;
    out += " = ";
    out += format_value(cfg, k);
    out += "\n";
  }
  return out;
}

}  // namespace plab
