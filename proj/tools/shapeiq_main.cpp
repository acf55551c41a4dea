#include <CLI11.hpp>

#include <iostream>

#include "shapeiq/commands.hpp"
#include "shapeiq/gemm.hpp"

using namespace shapeiq;

int main(int argc, char** argv) {
  CLI::App app{"shapeiq: procedural pattern-recognition questions, compact conv nets, "
               "and an analytic transformation-fitting solver"};
  app.set_config("--config", "", "key=value config file (flags win over file values)");
  app.require_subcommand(1);

  GenerateOptions gen;
  CLI::App* generate = app.add_subcommand("generate", "generate a question dataset");
  generate->add_option("--out", gen.out_dir, "output directory")->envname("SHAPEIQ_OUT");
  generate->add_option("--name", gen.name, "dataset basename");
  generate->add_option("--scenario", gen.scenario, "mc or open");
  generate->add_option("--total", gen.total, "number of questions");
  generate->add_option("--seed", gen.seed, "generation seed");
  generate->add_option("--family", gen.family, "restrict to one family");
  generate->add_option("--noise-sigma", gen.noise_sigma,
                       "IID Gaussian noise std on the 8-bit scale (0 = clean)");
  generate->add_flag("--verify,!--no-verify", gen.verify,
                     "verify every label with the analytic solver");
  generate->add_flag("--sheets,!--no-sheets", gen.contact_sheets,
                     "write contact sheets for the first questions per family");
  generate->add_option("--threads", gen.threads, "worker threads (0 = auto)");

  TrainOptions train;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model on a dataset");
  train_cmd->add_option("--data", train.data, "dataset path")->required();
  train_cmd->add_option("--model", train.model, "classifier or autoencoder");
  train_cmd->add_option("--out", train.out_dir, "output directory")->envname("SHAPEIQ_OUT");
  train_cmd->add_option("--family", train.family, "train on one family of a mixed dataset");
  train_cmd->add_option("--epochs", train.epochs, "training epochs");
  train_cmd->add_option("--batch-size", train.batch_size, "minibatch size");
  train_cmd->add_option("--lr", train.base_lr, "base learning rate");
  train_cmd->add_option("--seed", train.seed, "training seed");
  train_cmd->add_option("--val-fraction", train.val_fraction, "held-out validation share");
  train_cmd->add_flag("--augment,!--no-augment", train.option_augment,
                      "shuffle option order per presentation");
  train_cmd->add_option("--threads", train.threads, "worker threads (0 = auto)");

  EvalOptions eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "checkpoint path")->required();
  eval_cmd->add_option("--data", eval.data, "dataset path")->required();
  eval_cmd->add_option("--out", eval.out_dir, "output directory")->envname("SHAPEIQ_OUT");
  eval_cmd->add_option("--misclassified-sheets", eval.misclassified_sheets,
                       "contact sheets of wrong answers to export");
  eval_cmd->add_option("--open-grid", eval.open_grid,
                       "prediction/target sheets to export (open scenario)");
  eval_cmd->add_option("--threads", eval.threads, "worker threads (0 = auto)");

  SolveOptions solve;
  CLI::App* solve_cmd = app.add_subcommand("solve", "run the analytic solver on a dataset");
  solve_cmd->add_option("--data", solve.data, "dataset path")->required();
  solve_cmd->add_option("--out", solve.out_dir, "output directory")->envname("SHAPEIQ_OUT");
  solve_cmd->add_option("--limit", solve.limit, "solve only the first N records");
  solve_cmd->add_option("--threads", solve.threads, "worker threads (0 = auto)");

  RenderOptions render;
  CLI::App* render_cmd = app.add_subcommand("render", "export contact sheets from a dataset");
  render_cmd->add_option("--data", render.data, "dataset path")->required();
  render_cmd->add_option("--out", render.out_dir, "output directory")->envname("SHAPEIQ_OUT");
  render_cmd->add_option("--count", render.count, "questions to render");

  CLI::App* gradcheck_cmd =
      app.add_subcommand("gradcheck", "finite-difference checks for every layer kind");

  ReportOptions report;
  CLI::App* report_cmd =
      app.add_subcommand("report", "merge metrics CSVs under a directory into one table");
  report_cmd->add_option("--dir", report.dir, "directory holding eval/solve outputs")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) cmd_generate(gen);
    if (train_cmd->parsed()) cmd_train(train);
    if (eval_cmd->parsed()) cmd_eval(eval);
    if (solve_cmd->parsed()) cmd_solve(solve);
    if (render_cmd->parsed()) cmd_render(render);
    if (gradcheck_cmd->parsed()) return cmd_gradcheck(std::cout);
    if (report_cmd->parsed()) cmd_report(report);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
