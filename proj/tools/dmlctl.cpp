// dmlctl: train, evaluate and inspect metric-learning heads.
//
//   dmlctl train    --config run.json [--seed N] [--out-dir DIR]
//   dmlctl eval     --config run.json --model model.json [--gt gt.json] [--mode M] [--out-dir DIR]
//   dmlctl diagnose --model model.json --features f.emb --labels l.txt
//                   [--gamma --config run.json] [--bins B] [--out-dir DIR]

#include "dml/app.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App cli{"metric-learning toolkit"};
  cli.require_subcommand(1);

  dml::app::TrainOptions train;
  std::uint64_t train_seed = 0;
  auto* train_cmd = cli.add_subcommand("train", "train an embedding head");
  train_cmd->add_option("--config", train.config, "run config JSON")->required();
  auto* seed_opt = train_cmd->add_option("--seed", train_seed, "override the config seed");
  train_cmd->add_option("--out-dir", train.out_dir, "output directory");

  dml::app::EvalOptions eval;
  std::string gt_path, mode;
  auto* eval_cmd = cli.add_subcommand("eval", "compute retrieval metrics");
  eval_cmd->add_option("--config", eval.config, "run config JSON")->required();
  eval_cmd->add_option("--model", eval.model, "model JSON")->required();
  auto* gt_opt = eval_cmd->add_option("--gt", gt_path, "ground-truth JSON");
  auto* mode_opt = eval_cmd->add_option("--mode", mode, "category | particular");
  eval_cmd->add_option("--out-dir", eval.out_dir, "output directory");

  dml::app::DiagnoseOptions diag;
  std::string diag_config;
  std::uint64_t diag_seed = 0;
  bool with_gamma = false;
  auto* diag_cmd = cli.add_subcommand("diagnose", "energy curve, similarity histograms, gamma");
  diag_cmd->add_option("--model", diag.model, "model JSON")->required();
  diag_cmd->add_option("--features", diag.features, "EMB1 feature file")->required();
  diag_cmd->add_option("--labels", diag.labels, "labels file")->required();
  diag_cmd->add_flag("--gamma", with_gamma, "measure gradient noise with --config");
  auto* diag_config_opt = diag_cmd->add_option("--config", diag_config, "run config for --gamma");
  auto* diag_seed_opt = diag_cmd->add_option("--seed", diag_seed, "override the config seed");
  diag_cmd->add_option("--bins", diag.bins, "histogram bins");
  diag_cmd->add_option("--out-dir", diag.out_dir, "output directory");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*train_cmd) {
    if (*seed_opt) train.seed = train_seed;
    return dml::app::cli_train(train, std::cerr);
  }
  if (*eval_cmd) {
    if (*gt_opt) eval.ground_truth = gt_path;
    if (*mode_opt) eval.mode = mode;
    return dml::app::cli_eval(eval, std::cout, std::cerr);
  }
  if (with_gamma && !*diag_config_opt) {
    std::cerr << "error: --gamma needs --config\n";
    return 2;
  }
  if (with_gamma) diag.gamma_config = diag_config;
  if (*diag_seed_opt) diag.seed = diag_seed;
  return dml::app::cli_diagnose(diag, std::cerr);
}
