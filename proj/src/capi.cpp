#include "poisonlab/poisonlab.h"

#include <charconv>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#include "pipeline/ablate.hpp"
#include "pipeline/config.hpp"
#include "pipeline/pipeline.hpp"

namespace {

thread_local std::string g_error = "no error";

char* dup_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) return nullptr;
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

// Runs f, translating exceptions into result codes. Validation covers every
// user-fixable input problem; anything else is a runtime failure.
template <class F>
int guarded(F&& f) {
  try {
    f();
    return PLAB_OK;
  } catch (const plab::ConfigError& e) {
    g_error = e.what();
    return PLAB_VALIDATION;
  } catch (const plab::ValidationError& e) {
    g_error = e.what();
    return PLAB_VALIDATION;
  } catch (const std::exception& e) {
    g_error = e.what();
    return PLAB_RUNTIME;
  } catch (...) {
    g_error = "unknown failure";
    return PLAB_RUNTIME;
  }
}

std::vector<std::string> split_csv(const char* text) {
  std::vector<std::string> out;
  std::string s(text);
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t comma = s.find(',', start);
    if (comma == std::string::npos) comma = s.size();
    std::string item = s.substr(start, comma - start);
    std::size_t a = item.find_first_not_of(" \t");
    std::size_t b = item.find_last_not_of(" \t");
    if (a != std::string::npos) out.push_back(item.substr(a, b - a + 1));
    start = comma + 1;
  }
  return out;
}

}  // namespace

struct plab_run {
  plab::Pipeline pipeline;
};

extern "C" {

const char* plab_last_error(void) { return g_error.c_str(); }

plab_run* plab_open(const char* workspace, const char* config_file,
                    const char* const* overrides, size_t n_overrides) {
  plab_run* run = nullptr;
  guarded([&] {
    if (!workspace || !*workspace) throw plab::ValidationError("workspace path is required");
    plab::RunConfig cfg =
        config_file ? plab::load_config_file(config_file) : plab::RunConfig{};
    for (size_t i = 0; i < n_overrides; ++i) {
      if (!overrides || !overrides[i]) throw plab::ConfigError("null override");
      plab::apply_override(cfg, overrides[i]);
    }
    run = new plab_run{plab::Pipeline(std::move(cfg), workspace)};
  });
  return run;
}

void plab_close(plab_run* run) { delete run; }

int plab_stage(plab_run* run, const char* stage, int force, int* ran) {
  return guarded([&] {
    if (!run) throw plab::ValidationError("null run handle");
    if (!stage) throw plab::ValidationError("null stage name");
    std::string name(stage);
    bool did = false;
    if (name == "synth")
      did = run->pipeline.synth(force != 0);
    else if (name == "train-clean")
      did = run->pipeline.train_clean(force != 0);
    else if (name == "craft")
      did = run->pipeline.craft(force != 0);
    else if (name == "train-mixed")
      did = run->pipeline.train_mixed(force != 0);
    else if (name == "eval")
      did = run->pipeline.eval(force != 0);
    else
      throw plab::ValidationError("unknown stage '" + name +
                                  "'; expected synth, train-clean, craft, train-mixed or eval");
    if (ran) *ran = did ? 1 : 0;
  });
}

int plab_run_all(plab_run* run, int force) {
  return guarded([&] {
    if (!run) throw plab::ValidationError("null run handle");
    run->pipeline.run_all(force != 0);
  });
}

int plab_report(plab_run* run, char** out) {
  return guarded([&] {
    if (!run) throw plab::ValidationError("null run handle");
    if (!out) throw plab::ValidationError("null output pointer");
    *out = dup_string(run->pipeline.report());
    if (!*out) throw std::runtime_error("out of memory");
  });
}

int plab_ablate(plab_run* run, const char* dimension, const char* values, const char* seeds,
                char** out) {
  return guarded([&] {
    if (!run) throw plab::ValidationError("null run handle");
    if (!dimension || !*dimension) throw plab::ValidationError("ablation dimension is required");
    plab::AblationSpec spec;
    spec.dimension = dimension;
    if (values) spec.values = split_csv(values);
    if (seeds) {
      spec.seeds.clear();
      for (const std::string& s : split_csv(seeds)) {
        std::uint64_t v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size())
          throw plab::ConfigError("seed '" + s + "' is not an unsigned integer");
        spec.seeds.push_back(v);
      }
    }
    const auto& ws = run->pipeline.workspace();
    plab::AblationTable table =
        plab::run_ablation(run->pipeline.config(), spec, ws.root);
    plab::write_ablation_json(ws.root / "reports" / ("ablation_" + spec.dimension + ".json"),
                              table);
    plab::write_ablation_csv(ws.root / "reports" / ("ablation_" + spec.dimension + ".csv"),
                             table);
    if (out) {
      *out = dup_string(plab::ablation_text(table));
      if (!*out) throw std::runtime_error("out of memory");
    }
  });
}

int plab_config_text(plab_run* run, char** out) {
  return guarded([&] {
    if (!run) throw plab::ValidationError("null run handle");
    if (!out) throw plab::ValidationError("null output pointer");
    *out = dup_string(run->pipeline.config().canonical());
    if (!*out) throw std::runtime_error("out of memory");
  });
}

uint64_t plab_config_hash(plab_run* run) {
  return run ? run->pipeline.config().hash() : 0;
}

char* plab_default_config_text(void) { return dup_string(plab::default_config_text()); }

void plab_string_free(char* s) { std::free(s); }

}  // extern "C"
