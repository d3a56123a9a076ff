#pragma once

// Run configuration: a flat text file of `dotted.key = value` lines ('#'
// starts a comment). Every key has a default; unknown keys are rejected.

#include <filesystem>
#include <string>
#include <vector>

#include "hadamax/encoders.hpp"
#include "hadamax/pqn.hpp"

namespace hadamax {

using pqn::ConfigError;

struct RunConfig {
  std::string env = "pixel_catch";
  std::size_t resolution = 64;
  EncoderSpec encoder = EncoderSpec::hadamax(1);
  pqn::TrainConfig train;
  std::uint64_t seed = 0;
  std::string out_dir = "runs/default";
  std::size_t log_interval = 10;
  std::size_t checkpoint_interval = 0;
  std::size_t probe_size = 512;
  std::size_t threads = 0;  // 0: HDX_THREADS or the hardware concurrency

  /// Every accepted key, in file order.
  static const std::vector<std::string>& keys();
  /// Exact key, or a dotted suffix naming exactly one key ("lambda").
  static std::string resolve_key(const std::string& name);

  std::string get(const std::string& key) const;
  /// Setting encoder.variant also resets the ablation flags to that variant's
  /// defaults, so later lines may override them.
  void set(const std::string& key, const std::string& value);
  /// Applies a `key=value` override.
  void apply(const std::string& assignment);

  static RunConfig parse(const std::string& text, const std::string& origin = "<config>");
  static RunConfig load(const std::filesystem::path& path);
  std::string dump() const;
  void save(const std::filesystem::path& path) const;

  /// Throws ConfigError naming the offending field.
  void validate() const;

  bool operator==(const RunConfig&) const = default;
};

}  // namespace hadamax
