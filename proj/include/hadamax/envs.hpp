#pragma once

// Small pixel games with the Atari observation contract: a stack of the 4 most
// recent grayscale frames, oldest first, values in [0, 255].
//
// Each game runs on a logical grid of at most 12x12 cells; rendering upscales
// the grid to H x W with nearest-neighbour sampling.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hadamax/tensor.hpp"

namespace hadamax::envs {

inline constexpr std::size_t kStack = 4;

class EnvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

struct Transition {
  double reward = 0.0;
  bool terminal = false;
};

/// Logical game state and rules, without pixels.
class Game {
 public:
  virtual ~Game() = default;
  virtual std::string name() const = 0;
  virtual std::size_t num_actions() const = 0;
  virtual std::size_t rows() const = 0;
  virtual std::size_t cols() const = 0;
  /// Best achievable undiscounted episode return.
  virtual double optimal_return() const = 0;
  virtual void reset(Rng& rng) = 0;
  virtual Transition advance(std::size_t action, Rng& rng) = 0;
  /// rows*cols cell intensities.
  virtual void draw(std::span<std::uint8_t> cells) const = 0;
  virtual std::unique_ptr<Game> clone() const = 0;
};

/// Catch: a block falls one row per step; the paddle on the bottom row moves
/// left/stay/right. +1 when caught, -1 when missed; both end the episode.
class PixelCatch final : public Game {
 public:
  static constexpr std::size_t kRows = 10, kCols = 10;
  std::string name() const override { return "pixel_catch"; }
  std::size_t num_actions() const override { return 3; }
  std::size_t rows() const override { return kRows; }
  std::size_t cols() const override { return kCols; }
  double optimal_return() const override { return 1.0; }
  void reset(Rng& rng) override;
  Transition advance(std::size_t action, Rng& rng) override;
  void draw(std::span<std::uint8_t> cells) const override;
  std::unique_ptr<Game> clone() const override { return std::make_unique<PixelCatch>(*this); }

  std::size_t block_row() const { return block_row_; }
  std::size_t block_col() const { return block_col_; }
  std::size_t paddle_col() const { return paddle_col_; }
  void place(std::size_t block_row, std::size_t block_col, std::size_t paddle_col);

 private:
  std::size_t block_row_ = 0, block_col_ = 0, paddle_col_ = kCols / 2;
};

/// Agent on a 10x10 grid with 5 pellets. Actions: stay, up, down, left, right.
/// +1 per pellet; the episode ends when all are eaten or after 200 steps.
class GridCollect final : public Game {
 public:
  static constexpr std::size_t kSize = 10, kPellets = 5, kCap = 200;
  std::string name() const override { return "grid_collect"; }
  std::size_t num_actions() const override { return 5; }
  std::size_t rows() const override { return kSize; }
  std::size_t cols() const override { return kSize; }
  double optimal_return() const override { return static_cast<double>(kPellets); }
  void reset(Rng& rng) override;
  Transition advance(std::size_t action, Rng& rng) override;
  void draw(std::span<std::uint8_t> cells) const override;
  std::unique_ptr<Game> clone() const override { return std::make_unique<GridCollect>(*this); }

  std::size_t agent() const { return agent_; }
  const std::vector<bool>& pellets() const { return pellet_; }
  void place(std::size_t agent, const std::vector<std::size_t>& pellets);

 private:
  std::size_t agent_ = 0;
  std::vector<bool> pellet_ = std::vector<bool>(kSize * kSize, false);
  std::size_t left_ = 0, steps_ = 0;
};

/// Blocks fall from the top, at most one new block per step. The player on the
/// bottom row dodges (left/stay/right): -1 and episode end on a hit, +0.01 for
/// every survived step, episode end after 500 steps.
class PixelAvoid final : public Game {
 public:
  static constexpr std::size_t kRows = 10, kCols = 10, kCap = 500;
  static constexpr double kSpawn = 0.35, kSurvive = 0.01;
  std::string name() const override { return "pixel_avoid"; }
  std::size_t num_actions() const override { return 3; }
  std::size_t rows() const override { return kRows; }
  std::size_t cols() const override { return kCols; }
  double optimal_return() const override { return kSurvive * static_cast<double>(kCap); }
  void reset(Rng& rng) override;
  Transition advance(std::size_t action, Rng& rng) override;
  void draw(std::span<std::uint8_t> cells) const override;
  std::unique_ptr<Game> clone() const override { return std::make_unique<PixelAvoid>(*this); }

 private:
  std::size_t player_ = kCols / 2, steps_ = 0;
  std::vector<int> column_of_row_ = std::vector<int>(kRows, -1);  // one block per row at most
};

std::vector<std::string> game_names();
/// Throws EnvError for an unknown name.
std::unique_ptr<Game> make_game(const std::string& name);

struct EnvStep {
  double reward = 0.0;
  bool terminal = false;
  /// Undiscounted return of the episode so far, including this step.
  double episode_return = 0.0;
};

/// A game plus rendering and frame stacking.
class Environment {
 public:
  Environment(std::unique_ptr<Game> game, std::size_t resolution);
  Environment(const Environment& other);
  Environment& operator=(const Environment&) = delete;

  const Game& game() const { return *game_; }
  std::size_t num_actions() const { return game_->num_actions(); }
  std::size_t resolution() const { return res_; }
  double optimal_return() const { return game_->optimal_return(); }

  /// Reseeds and starts a new episode.
  void reset(std::uint64_t seed);
  /// New episode continuing the current random stream.
  void reset();
  EnvStep step(std::size_t action);

  /// [4, H, W], oldest frame first.
  const Tensor<float>& observation() const { return stack_; }

  /// Writes the newest frame as a binary portable graymap.
  void dump_frame(const std::filesystem::path& path) const;

 private:
  void begin_episode();
  void render(std::span<float> frame) const;
  void push_frame();

  std::unique_ptr<Game> game_;
  std::size_t res_;
  Rng rng_;
  Tensor<float> stack_;
  mutable std::vector<std::uint8_t> cells_;
  double episode_return_ = 0.0;
};

/// Throws EnvError for unknown names or resolution < 16.
Environment make_env(const std::string& name, std::size_t resolution);

/// Result of one synchronized step over all instances.
struct VectorStep {
  std::vector<double> rewards;
  std::vector<std::uint8_t> terminals;
  /// Returns of the episodes that ended on this step, in instance order.
  std::vector<double> finished_returns;
};

/// n independent instances seeded base_seed + i, stepped in lockstep. An
/// instance that terminates is reset at once: its slot in observations() holds
/// the first frame of the next episode while the step reports terminal.
class VectorEnv {
 public:
  VectorEnv(const std::string& name, std::size_t n, std::uint64_t base_seed, std::size_t resolution,
            std::size_t threads = 1);

  std::size_t size() const { return envs_.size(); }
  std::size_t num_actions() const { return envs_.front().num_actions(); }
  std::size_t resolution() const { return envs_.front().resolution(); }
  double optimal_return() const { return envs_.front().optimal_return(); }

  /// [n, 4, H, W]
  const Tensor<float>& observations() const { return obs_; }
  VectorStep step(std::span<const std::int32_t> actions);
  const Environment& instance(std::size_t i) const { return envs_.at(i); }

 private:
  void copy_out(std::size_t i);

  std::vector<Environment> envs_;
  Tensor<float> obs_;
  std::size_t threads_;
};

/// Worker cap from HDX_THREADS, falling back to the hardware concurrency.
std::size_t thread_budget();

}  // namespace hadamax::envs
