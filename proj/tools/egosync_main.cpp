// egosync command line: drives the six pipeline stages over one workspace
// directory. Exit codes: 0 success, 2 configuration problem, 3 missing or
// unreadable artifact, 4 numerical failure.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "egosync/pipeline.hpp"

namespace {

struct CliOptions {
  std::string config_path;
  std::string workspace = "workspace";
  std::uint64_t seed = 0;
  bool seed_given = false;
};

egosync::PipelineConfig make_config(const CliOptions& opt) {
  egosync::Config cfg = opt.config_path.empty()
                            ? egosync::Config::parse_string("", "<defaults>")
                            : egosync::Config::parse_file(opt.config_path);
  egosync::PipelineConfig pc = egosync::load_pipeline_config(cfg);
  if (opt.seed_given) egosync::apply_seed_override(pc, opt.seed);
  return pc;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const egosync::ConfigError*>(&e)) return 2;
  if (dynamic_cast<const egosync::MissingArtifact*>(&e) ||
      dynamic_cast<const egosync::VersionMismatch*>(&e) ||
      dynamic_cast<const egosync::CorruptCheckpoint*>(&e) ||
      dynamic_cast<const egosync::ParseError*>(&e) ||
      dynamic_cast<const egosync::DuplicateId*>(&e) ||
      dynamic_cast<const egosync::IoError*>(&e))
    return 3;
  return 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"first/third person view synchronization embeddings"};
  app.require_subcommand(1);

  CliOptions opt;
  app.add_option("--config", opt.config_path, "key = value configuration file")
      ->check(CLI::ExistingFile);
  app.add_option("--workspace", opt.workspace,
                 "workspace directory holding all stage artifacts");
  app.add_option("--seed", opt.seed,
                 "override every stage seed derived from this value")
      ->each([&opt](const std::string&) { opt.seed_given = true; });

  auto* synth = app.add_subcommand("synth-data", "generate the paired-view corpus");
  auto* train = app.add_subcommand("train-embed", "fit the two-stream embedding model");
  auto* extract = app.add_subcommand("extract", "embed every clip with the frozen model");
  auto* pose = app.add_subcommand("train-pose", "fit the pose regressors");
  auto* eval = app.add_subcommand("eval", "held-out pose and synchronization metrics");
  auto* analyze = app.add_subcommand("analyze", "latent space projections, CCA, transversals");
  auto* all = app.add_subcommand("all", "run every stage in order");

  CLI11_PARSE(app, argc, argv);

  try {
    const egosync::PipelineConfig pc = make_config(opt);
    if (synth->parsed()) egosync::cmd_synth_data(pc, opt.workspace);
    if (train->parsed()) egosync::cmd_train_embed(pc, opt.workspace);
    if (extract->parsed()) egosync::cmd_extract(pc, opt.workspace);
    if (pose->parsed()) egosync::cmd_train_pose(pc, opt.workspace);
    if (eval->parsed()) egosync::cmd_eval(pc, opt.workspace);
    if (analyze->parsed()) egosync::cmd_analyze(pc, opt.workspace);
    if (all->parsed()) egosync::cmd_run_all(pc, opt.workspace);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return 0;
}
