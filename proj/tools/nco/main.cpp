#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "nco/error.hpp"

namespace {

int exit_code(nco::ErrorKind kind) {
  switch (kind) {
    case nco::ErrorKind::kValidation: return 2;
    case nco::ErrorKind::kStateMismatch: return 3;
    case nco::ErrorKind::kNumerical: return 4;
  }
  return 1;
}

int fail(const std::string& command, int code, const std::string& message) {
  std::cerr << "error: " << message << '\n';
  std::cout << nlohmann::json{{"command", command}, {"status", "error"}, {"exit_code", code}, {"message", message}}
                   .dump()
            << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace nco::cli;
  CLI::App app{"Neural constructive TSP solver: data, training, decoding and scaling fits"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(NCO_GIT_DESCRIBE));

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--threads", common.threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
    sub->add_option("--out", common.out, "Output directory")->required();
  };

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate and label a TSP dataset");
  gen_cmd->add_option("--kind", gen.kind, "uniform | explosion | implosion | cluster")->capture_default_str();
  gen_cmd->add_option("--n", gen.n, "Nodes per instance")->capture_default_str();
  gen_cmd->add_option("--count", gen.count, "Number of instances")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Base seed")->capture_default_str();
  gen_cmd->add_option("--label", gen.label, "heldkarp | nn2opt | none")->capture_default_str();
  add_common(gen_cmd);

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a labeled dataset");
  train_cmd->add_option("--config", tr.config, "JSON training config (optional \"model\" section)");
  train_cmd->add_option("--preset", tr.preset, "Base settings before --config: desk | full")->capture_default_str();
  train_cmd->add_option("--data", tr.data, "Dataset file or gen-data directory")->required();
  train_cmd->add_option("--seed", tr.seed, "Override the training seed");
  train_cmd->add_option("--steps", tr.steps, "Override total_steps");
  train_cmd->add_option("--checkpoint-every", tr.checkpoint_every, "Extra checkpoint interval in steps");
  train_cmd->add_option("--resume", tr.resume, "train_state.bin to resume from");
  add_common(train_cmd);

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "Decode a dataset and score it against references");
  eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint file or training directory")->required();
  eval_cmd->add_option("--data", ev.data, "Labeled dataset file or gen-data directory");
  eval_cmd->add_option("--tsplib", ev.tsplib, "TSPLIB EUC_2D file");
  eval_cmd->add_option("--optimum", ev.optimum, "Known optimal tour length for --tsplib");
  eval_cmd->add_option("--decode", ev.decode, "greedy | beam:K | rrc:K | sample | reference")->capture_default_str();
  eval_cmd->add_option("--seed", ev.seed, "Seed for randomized decoders")->capture_default_str();
  eval_cmd->add_option("--n-train", ev.n_train, "Training problem size for the log(n) correction");
  eval_cmd->add_flag("--no-log-n", ev.no_log_n, "Disable the log(n) attention correction");
  eval_cmd->add_option("--config", ev.config, "Expected model config; a mismatch exits with 3");
  eval_cmd->add_option("--limit", ev.limit, "Evaluate only the first K instances");
  add_common(eval_cmd);

  FitOptions fit;
  auto* fit_cmd = app.add_subcommand("fit-scaling", "Fit scaling laws to evaluation records");
  fit_cmd->add_option("--records", fit.records, "Records CSV or bundled fixture name (default table9)");
  fit_cmd->add_option("--form", fit.form, "N | S | C | WD | NA | time")->capture_default_str();
  fit_cmd->add_option("--method", fit.method, "gap | log");
  fit_cmd->add_option("--group-by", fit.group_by, "none | depth | width")->capture_default_str();
  fit_cmd->add_option("--depth", fit.depth, "Keep only this depth");
  fit_cmd->add_option("--width", fit.width, "Keep only this width");
  fit_cmd->add_option("--decode", fit.decode, "Keep only this decode strategy");
  add_common(fit_cmd);

  AnalyzeOptions an;
  auto* an_cmd = app.add_subcommand("analyze", "Embedding and behavior diagnostics");
  an_cmd->add_option("--report", an.report, "longsight | pca | cosine | flops")->capture_default_str();
  an_cmd->add_option("--ckpt", an.ckpt, "Checkpoint file or training directory");
  an_cmd->add_option("--data", an.data, "Labeled dataset file or gen-data directory");
  an_cmd->add_option("--n-train", an.n_train, "Training problem size");
  an_cmd->add_option("--policy", an.policy, "longsight policy: model | oracle | nearest")->capture_default_str();
  an_cmd->add_option("--k", an.k, "longsight ranks before the pooled tail")->capture_default_str();
  an_cmd->add_option("--instance", an.instance, "Instance index for pca/cosine")->capture_default_str();
  an_cmd->add_option("--step", an.step, "Visited nodes before the snapshot (default n/2)");
  an_cmd->add_option("--limit", an.limit, "Use only the first K instances");
  an_cmd->add_option("--depth", an.depth, "flops: grid depth");
  an_cmd->add_option("--width", an.width, "flops: grid width");
  an_cmd->add_option("--n", an.n, "flops: problem size")->capture_default_str();
  an_cmd->add_option("--beam", an.beam, "flops: beam width")->capture_default_str();
  add_common(an_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return fail(app.get_subcommands().empty() ? "nco" : app.get_subcommands().front()->get_name(), 2, e.what());
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    nlohmann::json summary;
    if (command == "gen-data") summary = gen_data(common, gen);
    else if (command == "train") summary = train(common, tr);
    else if (command == "eval") summary = eval(common, ev);
    else if (command == "fit-scaling") summary = fit_scaling(common, fit);
    else summary = analyze(common, an);
    std::cout << summary.dump() << std::endl;
    return 0;
  } catch (const nco::Error& e) {
    return fail(command, exit_code(e.kind()), e.what());
  } catch (const std::exception& e) {
    return fail(command, 1, e.what());
  }
}
