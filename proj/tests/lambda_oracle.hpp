#pragma once

// Forward-view lambda-returns computed the long way: every n-step return is
// built explicitly and the lambda weights are applied to the whole set.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace oracle {

struct Problem {
  std::size_t T = 0, N = 0, A = 0;
  std::vector<double> rewards;        // [T, N]
  std::vector<std::uint8_t> dones;    // [T, N]
  std::vector<double> q_all;          // [T, N, A], Q(s_t)
  std::vector<double> q_boot;         // [N, A], Q(s_T)
  double gamma = 0.99, lambda = 0.65;
};

inline Problem random_problem(std::mt19937_64& rng, std::size_t T = 0, std::size_t N = 0) {
  std::uniform_int_distribution<std::size_t> steps(1, 8), envs(1, 3), acts(2, 4);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Problem p;
  p.T = T ? T : steps(rng);
  p.N = N ? N : envs(rng);
  p.A = acts(rng);
  for (std::size_t i = 0; i < p.T * p.N; ++i) {
    p.rewards.push_back(g(rng));
    p.dones.push_back(u(rng) < 0.3);
  }
  for (std::size_t i = 0; i < p.T * p.N * p.A; ++i) p.q_all.push_back(g(rng));
  for (std::size_t i = 0; i < p.N * p.A; ++i) p.q_boot.push_back(g(rng));
  p.gamma = 0.5 + 0.5 * u(rng);
  p.lambda = u(rng);
  return p;
}

// max_a Q(s_t, a) for env n, with t == T meaning the bootstrap observation.
inline double max_q(const Problem& p, std::size_t t, std::size_t n) {
  const double* q = t < p.T ? &p.q_all[(t * p.N + n) * p.A] : &p.q_boot[n * p.A];
  return *std::max_element(q, q + p.A);
}

// n-step return from (t, env); a terminal inside the window ends it without bootstrap.
inline double n_step(const Problem& p, std::size_t t, std::size_t env, std::size_t n) {
  double ret = 0.0, disc = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    ret += disc * p.rewards[(t + k) * p.N + env];
    if (p.dones[(t + k) * p.N + env]) return ret;
    disc *= p.gamma;
  }
  return ret + disc * max_q(p, t + n, env);
}

inline std::vector<double> forward_view(const Problem& p) {
  std::vector<double> y(p.T * p.N);
  for (std::size_t t = 0; t < p.T; ++t)
    for (std::size_t n = 0; n < p.N; ++n) {
      const std::size_t horizon = p.T - t;
      double acc = 0.0, w = 1.0 - p.lambda;
      for (std::size_t k = 1; k < horizon; ++k) {
        acc += w * n_step(p, t, n, k);
        w *= p.lambda;
      }
      acc += std::pow(p.lambda, static_cast<double>(horizon - 1)) * n_step(p, t, n, horizon);
      y[t * p.N + n] = acc;
    }
  return y;
}

// lambda = 0: one-step Q-learning targets.
inline std::vector<double> one_step(const Problem& p) {
  std::vector<double> y(p.T * p.N);
  for (std::size_t t = 0; t < p.T; ++t)
    for (std::size_t n = 0; n < p.N; ++n) {
      const std::size_t i = t * p.N + n;
      y[i] = p.dones[i] ? p.rewards[i] : p.rewards[i] + p.gamma * max_q(p, t + 1, n);
    }
  return y;
}

// lambda = 1: discounted reward sums, bootstrapped only at the rollout end.
inline std::vector<double> monte_carlo(const Problem& p) {
  std::vector<double> y(p.T * p.N);
  for (std::size_t n = 0; n < p.N; ++n) {
    double next = max_q(p, p.T, n);
    for (std::size_t t = p.T; t-- > 0;) {
      const std::size_t i = t * p.N + n;
      next = p.dones[i] ? p.rewards[i] : p.rewards[i] + p.gamma * next;
      y[i] = next;
    }
  }
  return y;
}

}  // namespace oracle
