#pragma once

// Orchestration behind the hdx commands.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hadamax/config.hpp"
#include "hadamax/trainer.hpp"

namespace hadamax::runs {

/// Runtime failure that should map to exit code 3.
class RunError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes config.cfg (the resolved configuration), log.csv, checkpoints/ and
/// summary.txt under cfg.out_dir.
pqn::TrainResult train(const RunConfig& cfg, std::ostream* progress = nullptr);

/// One line per stage, e.g. "block1  conv 8x8/1 x2 hadamard, gelu, ln, maxpool 4/4".
std::string describe(const EncoderSpec& spec);

struct EvalResult {
  std::vector<double> returns;
  double mean = 0.0;
  double stddev = 0.0;
};

/// Plays `episodes` episodes with an epsilon-greedy policy from the network.
EvalResult evaluate(const EncoderNet<float>& net, const std::string& env, std::size_t episodes, double epsilon,
                    std::uint64_t seed);
/// Loads `checkpoint`; the environment must match the encoder's input shape.
/// Writes one row per episode to `csv` when given.
EvalResult evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::string& env,
                               std::size_t episodes, double epsilon, std::uint64_t seed,
                               const std::filesystem::path& csv = {});

struct Arm {
  std::string name;
  EncoderSpec spec;
};

/// Subtractions from Hadamax and additions to the Nature baseline, in a fixed
/// order: hadamax, minus_maxpool, minus_hadamard, minus_gelu, nature,
/// nature_plus_maxpool, nature_plus_hadamard, nature_plus_gelu.
std::vector<Arm> ablation_arms();

struct ArmOutcome {
  std::string name;
  std::string description;
  std::size_t params = 0;
  double last50_return = 0.0;
  std::array<std::size_t, 4> srank{};
  double dead_frac = 0.0;
  double seconds = 0.0;
};

/// Trains every arm under one shared configuration, each in out_dir/<arm>, and
/// writes ablation.csv and ablation.txt to out_dir.
std::vector<ArmOutcome> ablate(const RunConfig& base, std::ostream* progress = nullptr);

struct ReportOptions {
  std::vector<std::filesystem::path> run_dirs;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> score_table;
  std::vector<double> taus;  // empty: 0, 0.1, ..., 8
};

/// Merges run logs into plot-ready CSVs (one column per run) plus summary.txt;
/// with a score table also score_profile.csv and the aggregate scores.
void report(const ReportOptions& opts);

}  // namespace hadamax::runs
