#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "isqa/commands.hpp"
#include "isqa/errors.hpp"

namespace {

int fail(const std::string& kind, const std::string& msg, int code) {
  std::string flat = msg;
  for (char& ch : flat)
    if (ch == '\n') ch = ' ';
  std::cerr << "error: " << kind << ": " << flat << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interactive sketch question answering: data, training, evaluation and serving"};
  app.require_subcommand(1);

  std::string config_path, out;
  std::vector<std::string> overrides;
  long long seed = -1;
  bool print_config = false;
  double budget = -1;
  int rounds = -1, port = -1;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "config file ([section] key = value)");
    sub->add_option("--seed", seed, "seed (data.seed for gen-data, train.seed otherwise)");
    sub->add_option("--out", out, "output root (default $ISQA_OUT_DIR or ./isqa_out)");
    sub->add_option("--override", overrides, "key=value, repeatable");
    sub->add_flag("--print-config", print_config, "print the resolved configuration and exit");
  };
  auto* gen = app.add_subcommand("gen-data", "build the shape-world dataset");
  auto* pre = app.add_subcommand("pretrain", "pretrain the receiver on reference sketches");
  auto* trn = app.add_subcommand("train", "train one sender/receiver variant");
  auto* evl = app.add_subcommand("eval", "run the evaluation sweep and write report tables");
  auto* run = app.add_subcommand("run-episode", "play one episode and write its trace");
  auto* srv = app.add_subcommand("serve", "serve the episode API over HTTP");
  for (auto* s : {gen, pre, trn, evl, run, srv}) common(s);
  run->add_option("--budget", budget, "total budget as a fraction of the canvas");
  run->add_option("--rounds", rounds, "number of rounds (1-3)");
  srv->add_option("--port", port, "TCP port");
  std::string checkpoint, dataset, mode;
  srv->add_option("--checkpoint", checkpoint, "checkpoint directory or variant name");
  srv->add_option("--dataset", dataset, "dataset directory");
  srv->add_option("--mode", mode, "human or machine");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    isqa::commands::Context ctx;
    if (!config_path.empty()) ctx.config.merge_file(config_path);
    std::string problems;
    try {
      ctx.config.override_all(overrides);
    } catch (const isqa::ConfigError& e) {
      problems = e.what();
    }
    if (seed >= 0) ctx.config.set(gen->parsed() ? "data.seed" : "train.seed", std::to_string(seed));
    if (budget >= 0) ctx.config.set("episode.budget", std::to_string(budget));
    if (rounds >= 0) ctx.config.set("episode.rounds", std::to_string(rounds));
    if (port >= 0) ctx.config.set("serve.port", std::to_string(port));
    if (!checkpoint.empty()) ctx.config.set("serve.checkpoint", checkpoint);
    if (!dataset.empty()) ctx.config.set("data.dir", dataset);
    if (!mode.empty()) ctx.config.set("serve.mode", mode);
    try {
      ctx.config.validate();
    } catch (const isqa::ConfigError& e) {
      problems += (problems.empty() ? "" : "; ") + std::string(e.what());
    }
    if (!problems.empty()) throw isqa::ConfigError(problems);
    if (print_config) {
      std::cout << ctx.config.resolved_text();
      return 0;
    }
    const char* env = std::getenv("ISQA_OUT_DIR");
    ctx.out = !out.empty() ? out : (env && *env ? env : "isqa_out");

    if (gen->parsed()) std::cout << "digest " << isqa::commands::gen_data(ctx) << "\n";
    if (pre->parsed()) isqa::commands::pretrain(ctx);
    if (trn->parsed()) isqa::commands::train(ctx);
    if (evl->parsed()) std::cout << "digest " << isqa::commands::eval(ctx) << "\n";
    if (run->parsed()) std::cout << "digest " << isqa::commands::run_episode(ctx) << "\n";
    if (srv->parsed()) isqa::commands::serve(ctx);
  } catch (const isqa::ConfigError& e) {
    return fail(e.kind(), e.what(), 2);
  } catch (const isqa::IoError& e) {
    return fail(e.kind(), e.what(), 3);
  } catch (const isqa::Error& e) {
    return fail(e.kind(), e.what(), 1);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
