#include <cstdio>
#include <cstdint>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <poisonlab/poisonlab.h>

namespace {

int do_stage(plab_run* run, const char* name, bool force) {
  int ran = 0;
  int rc = plab_stage(run, name, force ? 1 : 0, &ran);
  if (rc != PLAB_OK) {
    std::fprintf(stderr, "error: %s\n", plab_last_error());
    return rc;
  }
  std::printf("%s: %s\n", name, ran ? "done" : "up to date");
  return PLAB_OK;
}

int print_text(int rc, char* text) {
  if (rc != PLAB_OK) {
    std::fprintf(stderr, "error: %s\n", plab_last_error());
    return rc;
  }
  std::fputs(text, stdout);
  plab_string_free(text);
  return PLAB_OK;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"poison lab: clean-text visual backdoor experiments on a toy GUI agent"};
  app.require_subcommand(0, 1);

  std::string workspace, config_file;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  int workers = 0;
  bool force = false, print_config = false;

  app.add_option("-w,--workspace", workspace, "workspace directory")->envname("PLAB_WORKSPACE");
  app.add_option("-c,--config", config_file, "configuration file (see --print-config)");
  app.add_option("--set", sets, "override one key, e.g. --set craft.ratio=0.1");
  auto* seed_opt = app.add_option("--seed", seed, "override the global seed");
  auto* workers_opt =
      app.add_option("--workers", workers, "worker thread cap")->envname("PLAB_WORKERS");
  app.add_flag("--force", force, "rebuild outputs that already exist");
  app.add_flag("--print-config", print_config, "print the default configuration and exit");

  auto* synth = app.add_subcommand("synth", "generate the clean train/test datasets");
  auto* train = app.add_subcommand("train", "fine-tune a checkpoint");
  bool train_clean = false, train_mixed = false;
  train->add_flag("--clean", train_clean, "random init on the clean dataset");
  train->add_flag("--mixed", train_mixed, "clean checkpoint on the poisoned dataset");
  auto* craft = app.add_subcommand("craft", "craft the poisoned training set");
  auto* eval_cmd = app.add_subcommand("eval", "evaluate attack and clean-behavior metrics");
  auto* ablate = app.add_subcommand("ablate", "sweep one knob over a seed list");
  std::string dimension, values, seeds_csv;
  ablate->add_option("--dimension", dimension, "trigger | ratio | epsilon | position | size")
      ->required();
  ablate->add_option("--values", values, "comma-separated cell values (default: dimension grid)");
  ablate->add_option("--seeds", seeds_csv, "comma-separated seeds (default: 1,2,3)");
  auto* report = app.add_subcommand("report", "render the summary from stored reports");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return PLAB_VALIDATION;
  }

  if (print_config) {
    char* text = plab_default_config_text();
    std::fputs(text, stdout);
    plab_string_free(text);
    return PLAB_OK;
  }

  if (app.get_subcommands().empty()) {
    std::fputs(app.help().c_str(), stderr);
    return PLAB_VALIDATION;
  }

  if (workspace.empty()) {
    std::fprintf(stderr, "error: no workspace; pass --workspace or set PLAB_WORKSPACE\n");
    return PLAB_VALIDATION;
  }

  std::vector<std::string> overrides = sets;
  if (seed_opt->count() > 0) overrides.push_back("seed=" + std::to_string(seed));
  if (workers_opt->count() > 0) overrides.push_back("workers=" + std::to_string(workers));
  std::vector<const char*> ov;
  ov.reserve(overrides.size());
  for (const std::string& s : overrides) ov.push_back(s.c_str());

  plab_run* run = plab_open(workspace.c_str(),
                            config_file.empty() ? nullptr : config_file.c_str(), ov.data(),
                            ov.size());
  if (!run) {
    std::fprintf(stderr, "error: %s\n", plab_last_error());
    return PLAB_VALIDATION;
  }

  int rc = PLAB_OK;
  if (synth->parsed()) {
    rc = do_stage(run, "synth", force);
  } else if (train->parsed()) {
    if (train_clean == train_mixed) {
      std::fprintf(stderr, "error: train needs exactly one of --clean or --mixed\n");
      rc = PLAB_VALIDATION;
    } else {
      rc = do_stage(run, train_clean ? "train-clean" : "train-mixed", force);
    }
  } else if (craft->parsed()) {
    rc = do_stage(run, "craft", force);
  } else if (eval_cmd->parsed()) {
    rc = do_stage(run, "eval", force);
  } else if (ablate->parsed()) {
    char* text = nullptr;
    rc = plab_ablate(run, dimension.c_str(), values.empty() ? nullptr : values.c_str(),
                     seeds_csv.empty() ? nullptr : seeds_csv.c_str(), &text);
    rc = print_text(rc, text);
  } else if (report->parsed()) {
    char* text = nullptr;
    rc = plab_report(run, &text);
    rc = print_text(rc, text);
  }

  plab_close(run);
  return rc;
}
