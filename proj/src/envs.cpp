#include "hadamax/envs.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <string>
#include <thread>

namespace hadamax::envs {

namespace {

constexpr std::uint8_t kBackground = 0;
constexpr std::uint8_t kAgent = 255;
constexpr std::uint8_t kObject = 128;

std::size_t uniform(Rng& rng, std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

std::size_t shifted(std::size_t pos, int delta, std::size_t limit) {
  const auto moved = static_cast<std::ptrdiff_t>(pos) + delta;
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(moved, 0, static_cast<std::ptrdiff_t>(limit) - 1));
}

}  // namespace

// ---- PixelCatch ------------------------------------------------------------

void PixelCatch::reset(Rng& rng) {
  block_row_ = 0;
  block_col_ = uniform(rng, kCols);
  paddle_col_ = kCols / 2;
}

void PixelCatch::place(std::size_t block_row, std::size_t block_col, std::size_t paddle_col) {
  if (block_row >= kRows - 1 || block_col >= kCols || paddle_col >= kCols)
    throw EnvError("pixel_catch: placement outside the board");
  block_row_ = block_row;
  block_col_ = block_col;
  paddle_col_ = paddle_col;
}

Transition PixelCatch::advance(std::size_t action, Rng&) {
  paddle_col_ = shifted(paddle_col_, static_cast<int>(action) - 1, kCols);
  ++block_row_;
  if (block_row_ < kRows - 1) return {};
  return {block_col_ == paddle_col_ ? 1.0 : -1.0, true};
}

void PixelCatch::draw(std::span<std::uint8_t> cells) const {
  std::fill(cells.begin(), cells.end(), kBackground);
  cells[block_row_ * kCols + block_col_] = kObject;
  cells[(kRows - 1) * kCols + paddle_col_] = kAgent;
}

// ---- GridCollect -----------------------------------------------------------

void GridCollect::reset(Rng& rng) {
  std::vector<std::size_t> cells(kSize * kSize);
  for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = i;
  // Partial Fisher-Yates: agent first, then the pellets.
  for (std::size_t i = 0; i <= kPellets; ++i) std::swap(cells[i], cells[i + uniform(rng, cells.size() - i)]);
  place(cells[0], std::vector<std::size_t>(cells.begin() + 1, cells.begin() + 1 + kPellets));
}

void GridCollect::place(std::size_t agent, const std::vector<std::size_t>& pellets) {
  if (agent >= kSize * kSize) throw EnvError("grid_collect: agent outside the grid");
  std::fill(pellet_.begin(), pellet_.end(), false);
  left_ = 0;
  for (auto p : pellets) {
    if (p >= kSize * kSize || p == agent || pellet_[p]) throw EnvError("grid_collect: bad pellet placement");
    pellet_[p] = true;
    ++left_;
  }
  agent_ = agent;
  steps_ = 0;
}

Transition GridCollect::advance(std::size_t action, Rng&) {
  std::size_t r = agent_ / kSize, c = agent_ % kSize;
  switch (action) {
    case 1: r = shifted(r, -1, kSize); break;
    case 2: r = shifted(r, 1, kSize); break;
    case 3: c = shifted(c, -1, kSize); break;
    case 4: c = shifted(c, 1, kSize); break;
    default: break;
  }
  agent_ = r * kSize + c;
  ++steps_;
  Transition t;
  if (pellet_[agent_]) {
    pellet_[agent_] = false;
    --left_;
    t.reward = 1.0;
  }
  t.terminal = left_ == 0 || steps_ >= kCap;
  return t;
}

void GridCollect::draw(std::span<std::uint8_t> cells) const {
  for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = pellet_[i] ? kObject : kBackground;
  cells[agent_] = kAgent;
}

// ---- PixelAvoid ------------------------------------------------------------

void PixelAvoid::reset(Rng&) {
  player_ = kCols / 2;
  steps_ = 0;
  std::fill(column_of_row_.begin(), column_of_row_.end(), -1);
}

Transition PixelAvoid::advance(std::size_t action, Rng& rng) {
  player_ = shifted(player_, static_cast<int>(action) - 1, kCols);
  std::rotate(column_of_row_.rbegin(), column_of_row_.rbegin() + 1, column_of_row_.rend());
  column_of_row_[0] = -1;
  if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < kSpawn)
    column_of_row_[0] = static_cast<int>(uniform(rng, kCols));
  ++steps_;
  if (column_of_row_[kRows - 1] == static_cast<int>(player_)) return {-1.0, true};
  return {kSurvive, steps_ >= kCap};
}

void PixelAvoid::draw(std::span<std::uint8_t> cells) const {
  std::fill(cells.begin(), cells.end(), kBackground);
  for (std::size_t r = 0; r < kRows; ++r)
    if (column_of_row_[r] >= 0) cells[r * kCols + static_cast<std::size_t>(column_of_row_[r])] = kObject;
  cells[(kRows - 1) * kCols + player_] = kAgent;
}

std::vector<std::string> game_names() { return {"pixel_catch", "grid_collect", "pixel_avoid"}; }

std::unique_ptr<Game> make_game(const std::string& name) {
  if (name == "pixel_catch") return std::make_unique<PixelCatch>();
  if (name == "grid_collect") return std::make_unique<GridCollect>();
  if (name == "pixel_avoid") return std::make_unique<PixelAvoid>();
  throw EnvError("unknown environment '" + name + "' (expected pixel_catch, grid_collect or pixel_avoid)");
}

// ---- Environment -----------------------------------------------------------

Environment::Environment(std::unique_ptr<Game> game, std::size_t resolution)
    : game_(std::move(game)), res_(resolution), stack_({kStack, resolution, resolution}) {
  if (!game_) throw EnvError("null game");
  if (res_ < std::max<std::size_t>(16, std::max(game_->rows(), game_->cols())))
    throw EnvError("resolution " + std::to_string(res_) + " is below the minimum of 16");
  cells_.resize(game_->rows() * game_->cols());
  reset(0);
}

Environment::Environment(const Environment& other)
    : game_(other.game_->clone()),
      res_(other.res_),
      rng_(other.rng_),
      stack_(other.stack_),
      cells_(other.cells_),
      episode_return_(other.episode_return_) {}

void Environment::reset(std::uint64_t seed) {
  rng_.seed(seed);
  begin_episode();
}

void Environment::reset() { begin_episode(); }

void Environment::begin_episode() {
  game_->reset(rng_);
  episode_return_ = 0.0;
  const std::size_t plane = res_ * res_;
  render(stack_.data().subspan(0, plane));
  for (std::size_t s = 1; s < kStack; ++s) std::memcpy(stack_.raw() + s * plane, stack_.raw(), plane * sizeof(float));
}

void Environment::render(std::span<float> frame) const {
  game_->draw(cells_);
  const std::size_t rows = game_->rows(), cols = game_->cols();
  for (std::size_t y = 0; y < res_; ++y) {
    const std::size_t r = y * rows / res_;
    for (std::size_t x = 0; x < res_; ++x) frame[y * res_ + x] = cells_[r * cols + x * cols / res_];
  }
}

void Environment::push_frame() {
  const std::size_t plane = res_ * res_;
  std::memmove(stack_.raw(), stack_.raw() + plane, (kStack - 1) * plane * sizeof(float));
  render(stack_.data().subspan((kStack - 1) * plane, plane));
}

EnvStep Environment::step(std::size_t action) {
  if (action >= game_->num_actions())
    throw EnvError(game_->name() + ": action " + std::to_string(action) + " outside [0, " +
                   std::to_string(game_->num_actions()) + ")");
  const Transition t = game_->advance(action, rng_);
  episode_return_ += t.reward;
  push_frame();
  return {t.reward, t.terminal, episode_return_};
}

void Environment::dump_frame(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw EnvError("cannot write " + path.string());
  out << "P5\n" << res_ << ' ' << res_ << "\n255\n";
  const std::size_t plane = res_ * res_;
  std::vector<char> bytes(plane);
  for (std::size_t i = 0; i < plane; ++i) bytes[i] = static_cast<char>(stack_[(kStack - 1) * plane + i]);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Environment make_env(const std::string& name, std::size_t resolution) {
  return Environment(make_game(name), resolution);
}

// ---- VectorEnv -------------------------------------------------------------

std::size_t thread_budget() {
  if (const char* v = std::getenv("HDX_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (end != v && n > 0) return static_cast<std::size_t>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

VectorEnv::VectorEnv(const std::string& name, std::size_t n, std::uint64_t base_seed, std::size_t resolution,
                     std::size_t threads)
    : threads_(std::max<std::size_t>(1, threads)) {
  if (n == 0) throw EnvError("vector env needs at least one instance");
  envs_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    envs_.push_back(make_env(name, resolution));
    envs_.back().reset(base_seed + i);
  }
  obs_ = Tensor<float>({n, kStack, resolution, resolution});
  for (std::size_t i = 0; i < n; ++i) copy_out(i);
}

void VectorEnv::copy_out(std::size_t i) {
  const auto& src = envs_[i].observation();
  std::memcpy(obs_.raw() + i * src.size(), src.raw(), src.size() * sizeof(float));
}

VectorStep VectorEnv::step(std::span<const std::int32_t> actions) {
  const std::size_t n = envs_.size();
  if (actions.size() != n)
    throw EnvError("expected " + std::to_string(n) + " actions, got " + std::to_string(actions.size()));
  std::vector<EnvStep> steps(n);
  std::vector<std::string> faults(n);
  auto run = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      try {
        if (actions[i] < 0) throw EnvError("negative action " + std::to_string(actions[i]));
        steps[i] = envs_[i].step(static_cast<std::size_t>(actions[i]));
        if (steps[i].terminal) envs_[i].reset();
        copy_out(i);
      } catch (const std::exception& e) {
        faults[i] = e.what();
      }
    }
  };
  const std::size_t workers = std::min(threads_, n);
  if (workers <= 1) {
    run(0, n);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t lo = 0; lo < n; lo += chunk) pool.emplace_back(run, lo, std::min(n, lo + chunk));
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!faults[i].empty()) throw EnvError("env " + std::to_string(i) + ": " + faults[i]);

  VectorStep out;
  out.rewards.resize(n);
  out.terminals.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.rewards[i] = steps[i].reward;
    out.terminals[i] = steps[i].terminal ? 1 : 0;
    if (steps[i].terminal) out.finished_returns.push_back(steps[i].episode_return);
  }
  return out;
}

}  // namespace hadamax::envs
