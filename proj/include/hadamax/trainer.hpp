#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hadamax/encoders.hpp"
#include "hadamax/pqn.hpp"

namespace hadamax::pqn {

struct TrainOptions {
  TrainConfig cfg;
  EncoderSpec spec;  // action_dim/height/width are taken from the environment
  std::string env = "pixel_catch";
  std::size_t resolution = 64;
  std::uint64_t seed = 0;
  /// Empty: keep everything in memory.
  std::filesystem::path out_dir;
  std::size_t log_interval = 10;         // iterations between diagnostic rows
  std::size_t checkpoint_interval = 0;   // iterations; 0 keeps only the final checkpoint
  std::size_t probe_size = 512;
  std::size_t threads = 1;
  std::function<void(const std::string&)> progress;
};

struct LogRow {
  std::size_t iter = 0;
  std::uint64_t frames = 0;
  double epsilon = 0.0;
  double loss = 0.0;
  double mean_return = 0.0;  // last 50 finished episodes; NaN before the first
  std::array<std::size_t, 4> srank{};
  double dead_frac = 0.0;
};

inline constexpr const char* kLogHeader = "iter,frames,epsilon,loss,mean_return,srank_l1,srank_l2,srank_l3,srank_l4,dead_frac";
std::string format_log_row(const LogRow& row);

struct TrainResult {
  std::vector<LogRow> log;
  std::vector<double> episode_returns;
  double last50_return = 0.0;
  std::array<std::size_t, 4> srank{};
  double dead_frac = 0.0;
  double seconds = 0.0;
  double cpu_seconds = 0.0;
  std::optional<EncoderNet<float>> net;
};

/// Raised when the loss goes non-finite; a checkpoint has been written first.
class TrainingFault : public std::runtime_error {
 public:
  TrainingFault(const std::string& what, std::filesystem::path dump)
      : std::runtime_error(what), checkpoint(std::move(dump)) {}
  std::filesystem::path checkpoint;
};

/// Encoder spec with the input shape and action count of `env` filled in.
EncoderSpec spec_for_env(EncoderSpec spec, const std::string& env, std::size_t resolution);

/// Per iteration: one rollout, lambda-targets once, then num_epochs passes over
/// num_minibatches shuffled minibatches (forward, loss, backward, clip, RAdam).
TrainResult train(const TrainOptions& opts);

/// Mean of the trailing `window` values (NaN when empty).
double trailing_mean(const std::vector<double>& values, std::size_t window = 50);

/// Row partition used for the minibatches of one epoch.
std::vector<std::vector<std::size_t>> minibatch_partition(std::size_t rows, std::size_t parts, std::mt19937_64& rng);

struct ProbeStats {
  std::array<std::size_t, 4> srank{};
  double dead_frac = 0.0;
};

/// Effective rank of the four probe layers and the dead fraction of the last.
ProbeStats probe_diagnostics(const EncoderNet<float>& net, const Tensor<float>& probe_obs, std::size_t chunk = 64);

/// Observations gathered with a uniform random policy on a separate env set.
Tensor<float> collect_probe_batch(const std::string& env, std::size_t resolution, std::size_t count, std::uint64_t seed);

}  // namespace hadamax::pqn
