#include "hadamax/pqn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace hadamax::pqn {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (num_envs == 0) fail("train.num_envs: must be positive");
  if (num_steps == 0) fail("train.num_steps: must be positive");
  if (num_epochs == 0) fail("train.num_epochs: must be positive");
  if (num_minibatches == 0) fail("train.num_minibatches: must be positive");
  if (frames_per_iteration() % num_minibatches != 0)
    fail("train.num_minibatches: num_envs * num_steps (" + std::to_string(frames_per_iteration()) +
         ") is not divisible by " + std::to_string(num_minibatches));
  if (!(lambda >= 0.0 && lambda <= 1.0)) fail("train.lambda: must lie in [0, 1], got " + std::to_string(lambda));
  if (!(gamma >= 0.0 && gamma < 1.0)) fail("train.gamma: must lie in [0, 1), got " + std::to_string(gamma));
  if (!(eps_start >= 0.0 && eps_start <= 1.0)) fail("train.eps_start: must lie in [0, 1]");
  if (!(eps_finish >= 0.0 && eps_finish <= eps_start)) fail("train.eps_finish: must lie in [0, eps_start]");
  if (!(eps_decay > 0.0 && eps_decay <= 1.0)) fail("train.eps_decay: must lie in (0, 1]");
  if (!(lr > 0.0 && std::isfinite(lr))) fail("train.lr: must be positive");
  if (!(max_grad_norm > 0.0)) fail("train.max_grad_norm: must be positive");
  if (total_frames == 0) fail("train.total_frames: must be positive");
}

std::size_t TrainConfig::iterations() const {
  return std::max<std::size_t>(1, static_cast<std::size_t>(total_frames / frames_per_iteration()));
}

double epsilon_at(std::uint64_t frame, const TrainConfig& cfg) {
  const double span = cfg.eps_decay * static_cast<double>(cfg.total_frames);
  const double f = static_cast<double>(frame);
  if (f >= span) return cfg.eps_finish;
  return cfg.eps_start + (cfg.eps_finish - cfg.eps_start) * (f / span);
}

std::int32_t select_action(std::span<const float> q, double epsilon, std::mt19937_64& rng) {
  const bool explore = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < epsilon;
  if (explore) return std::uniform_int_distribution<std::int32_t>(0, static_cast<std::int32_t>(q.size()) - 1)(rng);
  return static_cast<std::int32_t>(std::max_element(q.begin(), q.end()) - q.begin());
}

TrajectoryBatch collect_rollout(envs::VectorEnv& envs, const EncoderNet<float>& net, std::uint64_t first_frame,
                                const TrainConfig& cfg, std::mt19937_64& rng) {
  const std::size_t T = cfg.num_steps, N = envs.size(), A = envs.num_actions();
  if (net.spec().action_dim != A) throw std::invalid_argument("encoder action_dim does not match the environment");
  const Shape& os = envs.observations().shape();
  const std::size_t frame = os[1] * os[2] * os[3];

  TrajectoryBatch b;
  b.steps = T;
  b.envs = N;
  b.actions_dim = A;
  b.obs = Tensor<float>({T, N, os[1], os[2], os[3]});
  b.q_all = Tensor<float>({T, N, A});
  b.actions.resize(T * N);
  b.rewards.resize(T * N);
  b.dones.resize(T * N);

  std::uint64_t frames = first_frame;
  for (std::size_t t = 0; t < T; ++t) {
    const Tensor<float>& obs = envs.observations();
    std::memcpy(b.obs.raw() + t * N * frame, obs.raw(), N * frame * sizeof(float));
    const Tensor<float> q = net.q_values(obs);
    std::memcpy(b.q_all.raw() + t * N * A, q.raw(), N * A * sizeof(float));
    for (std::size_t n = 0; n < N; ++n) {
      const double eps = epsilon_at(frames + n, cfg);
      b.actions[t * N + n] = select_action(q.data().subspan(n * A, A), eps, rng);
    }
    frames += N;
    const envs::VectorStep step = envs.step(std::span<const std::int32_t>(b.actions).subspan(t * N, N));
    std::copy(step.rewards.begin(), step.rewards.end(), b.rewards.begin() + static_cast<std::ptrdiff_t>(t * N));
    std::copy(step.terminals.begin(), step.terminals.end(), b.dones.begin() + static_cast<std::ptrdiff_t>(t * N));
    b.finished_returns.insert(b.finished_returns.end(), step.finished_returns.begin(), step.finished_returns.end());
  }
  b.next_obs_last = envs.observations();
  return b;
}

std::vector<double> lambda_returns(std::size_t steps, std::size_t envs, std::size_t actions,
                                   std::span<const double> rewards, std::span<const std::uint8_t> dones,
                                   std::span<const double> q_all, std::span<const double> q_boot, double gamma,
                                   double lambda) {
  const std::size_t T = steps, N = envs, A = actions;
  if (rewards.size() != T * N || dones.size() != T * N || q_all.size() != T * N * A || q_boot.size() != N * A)
    throw ShapeError("lambda_returns: inconsistent trajectory extents");
  if (A == 0) throw ShapeError("lambda_returns: no actions");
  for (double v : q_all)
    if (std::isnan(v)) throw std::domain_error("lambda_returns: NaN in q-values");
  for (double v : q_boot)
    if (std::isnan(v)) throw std::domain_error("lambda_returns: NaN in bootstrap q-values");

  auto max_of = [A](std::span<const double> row) { return *std::max_element(row.begin(), row.begin() + A); };
  std::vector<double> y(T * N);
  for (std::size_t n = 0; n < N; ++n) {
    double next_max = max_of(q_boot.subspan(n * A, A));
    double next_y = next_max;
    for (std::size_t t = T; t-- > 0;) {
      const std::size_t i = t * N + n;
      y[i] = dones[i] ? rewards[i] : rewards[i] + gamma * (lambda * next_y + (1.0 - lambda) * next_max);
      next_y = y[i];
      next_max = max_of(q_all.subspan(i * A, A));
    }
  }
  return y;
}

template <typename T>
Var<T> pqn_loss(const Var<T>& q_taken, const Tensor<T>& targets) {
  if (q_taken.shape() != targets.shape())
    throw ShapeError("pqn_loss: q " + shape_string(q_taken.shape()) + " vs targets " + shape_string(targets.shape()));
  Tensor<T> neg = targets;
  for (auto& v : neg.data()) v = -v;
  Var<T> diff = add(q_taken, q_taken.tape().constant(std::move(neg)));
  return mean(mul(diff, diff));
}

template <typename T>
double clip_grad_norm(std::span<Tensor<T>> grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (T v : g.data()) sq += static_cast<double>(v) * static_cast<double>(v);
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto& g : grads)
      for (T& v : g.data()) v *= s;
  }
  return norm;
}

template Var<float> pqn_loss(const Var<float>&, const Tensor<float>&);
template Var<double> pqn_loss(const Var<double>&, const Tensor<double>&);
template double clip_grad_norm(std::span<Tensor<float>>, double);
template double clip_grad_norm(std::span<Tensor<double>>, double);

}  // namespace hadamax::pqn
