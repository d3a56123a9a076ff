// hdx: train, evaluate, ablate and report on the Hadamax/PQN stack.
//
// Exit codes: 0 ok, 1 usage, 2 bad configuration, 3 runtime failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "CLI11.hpp"
#include "hadamax/config.hpp"
#include "hadamax/envs.hpp"
#include "hadamax/runs.hpp"

namespace fs = std::filesystem;
using namespace hadamax;

namespace {

struct ConfigArgs {
  std::string file;
  std::vector<std::string> sets;
  std::string out;
  bool quiet = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", file, "config file (key = value lines)")->check(CLI::ExistingFile);
    cmd->add_option("-s,--set", sets, "override, e.g. --set train.lambda=0.5 or --set lambda=0.5");
    cmd->add_option("-o,--out", out, "output directory (run.out_dir)");
    cmd->add_flag("-q,--quiet", quiet, "no progress output");
  }

  RunConfig resolve() const {
    RunConfig cfg = file.empty() ? RunConfig{} : RunConfig::load(file);
    for (const auto& s : sets) cfg.apply(s);
    if (!out.empty()) cfg.out_dir = out;
    cfg.validate();
    return cfg;
  }
};

int run(int argc, char** argv) {
  CLI::App app{"Hadamax encoders trained with PQN Q(lambda)"};
  app.require_subcommand(1);

  ConfigArgs train_args;
  auto* train = app.add_subcommand("train", "train one run; writes config.cfg, log.csv, checkpoints/, summary.txt");
  train_args.attach(train);

  ConfigArgs show_args;
  auto* show = app.add_subcommand("config", "print the resolved configuration");
  show_args.attach(show);

  std::string ckpt, eval_env = "pixel_catch", eval_csv;
  std::size_t episodes = 100;
  double eval_eps = 0.0;
  std::uint64_t eval_seed = 12345;
  auto* eval = app.add_subcommand("eval", "play episodes with a trained checkpoint");
  eval->add_option("checkpoint", ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("-e,--env", eval_env, "environment")->capture_default_str();
  eval->add_option("-n,--episodes", episodes, "episodes to play")->capture_default_str();
  eval->add_option("--epsilon", eval_eps, "exploration rate")->capture_default_str();
  eval->add_option("--seed", eval_seed, "environment seed")->capture_default_str();
  eval->add_option("--csv", eval_csv, "per-episode returns");

  ConfigArgs ablate_args;
  auto* ablate = app.add_subcommand("ablate", "train every ablation arm under one configuration");
  ablate_args.attach(ablate);

  runs::ReportOptions rep;
  std::string scores;
  auto* report = app.add_subcommand("report", "merge run logs into plot-ready CSVs");
  report->add_option("runs", rep.run_dirs, "run directories")->required();
  report->add_option("-o,--out", rep.out_dir, "output directory")->required();
  report->add_option("--scores", scores, "score table (game,raw,random,human)")->check(CLI::ExistingFile);
  report->add_option("--tau", rep.taus, "profile thresholds");

  std::string render_env = "pixel_catch", render_out = "frames";
  std::size_t render_res = 64, render_steps = 20;
  std::uint64_t render_seed = 0;
  auto* render = app.add_subcommand("render", "dump frames from a random-policy episode as PGM files");
  render->add_option("-e,--env", render_env, "environment")->capture_default_str();
  render->add_option("-r,--resolution", render_res, "frame side")->capture_default_str();
  render->add_option("-n,--steps", render_steps, "steps to play")->capture_default_str();
  render->add_option("--seed", render_seed, "seed")->capture_default_str();
  render->add_option("-o,--out", render_out, "output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train) {
      const RunConfig cfg = train_args.resolve();
      const auto r = runs::train(cfg, train_args.quiet ? nullptr : &std::cout);
      std::printf("last50_return %.4f  srank %zu/%zu/%zu/%zu  dead %.4f  %.1fs\n", r.last50_return, r.srank[0],
                  r.srank[1], r.srank[2], r.srank[3], r.dead_frac, r.seconds);
    } else if (*show) {
      std::cout << show_args.resolve().dump();
    } else if (*eval) {
      const auto r = runs::evaluate_checkpoint(ckpt, eval_env, episodes, eval_eps, eval_seed, eval_csv);
      std::printf("episodes %zu  mean %.4f  std %.4f\n", r.returns.size(), r.mean, r.stddev);
    } else if (*ablate) {
      const RunConfig cfg = ablate_args.resolve();
      runs::ablate(cfg, ablate_args.quiet ? nullptr : &std::cout);
      std::ifstream txt(fs::path(cfg.out_dir) / "ablation.txt");
      std::cout << txt.rdbuf();
    } else if (*report) {
      if (!scores.empty()) rep.score_table = scores;
      runs::report(rep);
      std::ifstream txt(rep.out_dir / "summary.txt");
      std::cout << txt.rdbuf();
    } else if (*render) {
      envs::Environment env = envs::make_env(render_env, render_res);
      env.reset(render_seed);
      fs::create_directories(render_out);
      std::mt19937_64 rng(render_seed);
      std::uniform_int_distribution<std::size_t> pick(0, env.num_actions() - 1);
      char name[32];
      for (std::size_t t = 0; t <= render_steps; ++t) {
        std::snprintf(name, sizeof name, "frame_%04zu.pgm", t);
        env.dump_frame(fs::path(render_out) / name);
        if (t < render_steps && env.step(pick(rng)).terminal) env.reset();
      }
      std::printf("wrote %zu frames to %s\n", render_steps + 1, render_out.c_str());
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const pqn::TrainingFault& e) {
    std::cerr << "training fault: " << e.what() << " (state saved to " << e.checkpoint.string() << ")\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
