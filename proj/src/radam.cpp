#include <cmath>
#include <string>

#include "hadamax/pqn.hpp"

namespace hadamax::pqn {

double radam_rho(std::uint64_t t, double beta2) {
  const double rho_inf = 2.0 / (1.0 - beta2) - 1.0;
  const double b2t = std::pow(beta2, static_cast<double>(t));
  return rho_inf - 2.0 * static_cast<double>(t) * b2t / (1.0 - b2t);
}

template <typename T>
OptimizerState<T> OptimizerState<T>::like(std::span<const Tensor<T>> params) {
  OptimizerState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.shape());
    s.v.emplace_back(p.shape());
  }
  return s;
}

template <typename T>
void radam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads, OptimizerState<T>& state,
                double lr, const RAdamConfig& cfg) {
  if (params.size() != grads.size() || state.m.size() != params.size())
    throw std::invalid_argument("radam_step: parameter, gradient and state counts differ");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != params[i]->shape() || state.m[i].shape() != params[i]->shape())
      throw ShapeError("radam_step: shape mismatch at parameter " + std::to_string(i));
    for (std::size_t j = 0; j < grads[i].size(); ++j)
      if (!std::isfinite(grads[i][j]))
        throw NonFiniteError("non-finite gradient in parameter " + std::to_string(i) + " at element " +
                             std::to_string(j));
  }

  const std::uint64_t t = ++state.step;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
  const double rho_inf = 2.0 / (1.0 - b2) - 1.0;
  const double rho = radam_rho(t, b2);
  state.last_rectified = rho > 4.0;
  const double rect =
      state.last_rectified ? std::sqrt((rho - 4.0) * (rho - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho))
                           : 0.0;

  for (std::size_t i = 0; i < params.size(); ++i) {
    T* p = params[i]->raw();
    T* m = state.m[i].raw();
    T* v = state.v[i].raw();
    const T* g = grads[i].raw();
    for (std::size_t j = 0; j < grads[i].size(); ++j) {
      const double gj = g[j];
      const double mj = b1 * m[j] + (1.0 - b1) * gj;
      const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double m_hat = mj / bc1;
      const double update = state.last_rectified ? rect * m_hat / (std::sqrt(vj / bc2) + cfg.eps) : m_hat;
      p[j] = static_cast<T>(p[j] - lr * update);
    }
  }
}

template struct OptimizerState<float>;
template struct OptimizerState<double>;
template void radam_step(std::span<Tensor<float>* const>, std::span<const Tensor<float>>, OptimizerState<float>&,
                         double, const RAdamConfig&);
template void radam_step(std::span<Tensor<double>* const>, std::span<const Tensor<double>>, OptimizerState<double>&,
                         double, const RAdamConfig&);

}  // namespace hadamax::pqn
