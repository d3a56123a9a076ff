#pragma once

// Parallelised Q-learning with lambda-returns: no replay buffer, no target
// network. Building blocks used by the trainer.

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "hadamax/autodiff.hpp"
#include "hadamax/encoders.hpp"
#include "hadamax/envs.hpp"

namespace hadamax::pqn {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TrainConfig {
  std::size_t num_envs = 128;
  std::size_t num_steps = 32;
  double eps_start = 1.0;
  double eps_finish = 0.001;
  double eps_decay = 0.1;  // fraction of total_frames spent annealing
  std::size_t num_epochs = 2;
  std::size_t num_minibatches = 32;
  double lr = 0.00025;
  double max_grad_norm = 10.0;
  double gamma = 0.99;
  double lambda = 0.65;
  std::uint64_t total_frames = 300'000;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;

  std::size_t frames_per_iteration() const { return num_envs * num_steps; }
  std::size_t minibatch_size() const { return frames_per_iteration() / num_minibatches; }
  /// Whole iterations that fit in total_frames (at least one).
  std::size_t iterations() const;

  bool operator==(const TrainConfig&) const = default;
};

/// Linear anneal from eps_start to eps_finish over the first eps_decay *
/// total_frames frames, then flat.
double epsilon_at(std::uint64_t frame, const TrainConfig& cfg);

/// T synchronized steps over N environments.
struct TrajectoryBatch {
  std::size_t steps = 0, envs = 0, actions_dim = 0;
  Tensor<float> obs;                  // [T, N, 4, H, W]
  std::vector<std::int32_t> actions;  // [T * N]
  std::vector<double> rewards;        // [T * N]
  std::vector<std::uint8_t> dones;    // [T * N], environment terminal
  Tensor<float> next_obs_last;        // [N, 4, H, W]
  Tensor<float> q_all;                // [T, N, A], Q(s_t) seen while acting
  std::vector<double> finished_returns;
};

/// Steps `envs` for cfg.num_steps with epsilon-greedy actions from `net`.
/// Epsilon follows epsilon_at(first_frame + frames collected so far).
TrajectoryBatch collect_rollout(envs::VectorEnv& envs, const EncoderNet<float>& net, std::uint64_t first_frame,
                                const TrainConfig& cfg, std::mt19937_64& rng);

/// Epsilon-greedy choice; ties in the greedy branch go to the lowest index.
std::int32_t select_action(std::span<const float> q, double epsilon, std::mt19937_64& rng);

/// Backward recursion, t = T-1 .. 0, with M_{t+1} = max_a Q(s_{t+1}, a):
///   done_t:  y_t = r_t
///   else:    y_t = r_t + gamma (lambda y_{t+1} + (1 - lambda) M_{t+1})
/// where y_T = M_T comes from q_boot. q_all is [T, N, A] holding Q(s_t);
/// q_boot is [N, A] holding Q of the observation after the last step.
std::vector<double> lambda_returns(std::size_t steps, std::size_t envs, std::size_t actions,
                                   std::span<const double> rewards, std::span<const std::uint8_t> dones,
                                   std::span<const double> q_all, std::span<const double> q_boot, double gamma,
                                   double lambda);

/// mean((q_taken - targets)^2); targets enter as constants.
template <typename T>
Var<T> pqn_loss(const Var<T>& q_taken, const Tensor<T>& targets);

/// Rescales all gradients by max_norm / norm when their global L2 norm exceeds
/// max_norm. Returns the norm before clipping.
template <typename T>
double clip_grad_norm(std::span<Tensor<T>> grads, double max_norm);

struct RAdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct OptimizerState {
  std::vector<Tensor<T>> m, v;
  std::uint64_t step = 0;
  /// Whether the last step used the rectified adaptive branch.
  bool last_rectified = false;

  static OptimizerState like(std::span<const Tensor<T>> params);
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One RAdam update of every parameter in place. A non-finite gradient throws
/// NonFiniteError before anything is modified.
template <typename T>
void radam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads, OptimizerState<T>& state,
                double lr, const RAdamConfig& cfg = {});

/// rho_t of the rectification, rho_inf - 2 t beta2^t / (1 - beta2^t).
double radam_rho(std::uint64_t t, double beta2);

}  // namespace hadamax::pqn
