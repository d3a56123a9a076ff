#pragma once

// Finite-difference cases shared by the unit tests and the acceptance run.
// Each case draws a random instance (shapes and values) from a seed.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "hadamax/autodiff.hpp"
#include "hadamax/encoders.hpp"
#include "hadamax/layers.hpp"
#include "hadamax/pqn.hpp"

namespace gradsuite {

using namespace hadamax;

struct Instance {
  FdGraph graph;
  std::vector<Tensor<double>> inputs;
  FdOptions opts;
};

struct Case {
  std::string name;
  std::function<Instance(std::uint64_t)> draw;
};

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline Tensor<double> gaussian(const Shape& s, std::mt19937_64& rng, double sd = 1.0) {
  return Tensor<double>::create(s, fill::Gaussian{0.0, sd, rng()});
}

// Distinct values 0.05 apart so no central difference crosses an argmax tie.
inline Tensor<double> spread(const Shape& s, std::mt19937_64& rng) {
  Tensor<double> t(s);
  std::vector<std::size_t> perm(t.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.05 * static_cast<double>(perm[i]) - 0.025 * t.size();
  return t;
}

// Values bounded away from the relu kink.
inline Tensor<double> off_kink(const Shape& s, std::mt19937_64& rng) {
  Tensor<double> t = gaussian(s, rng);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = (t[i] < 0 ? -1.0 : 1.0) * (0.05 + std::abs(t[i]));
  return t;
}

/// Largest relative error over the parameter gradients of an encoder, probing
/// `per_tensor` coordinates of every parameter tensor by central differences.
inline double encoder_param_error(const EncoderNet<double>& net0, const Tensor<double>& x, std::uint64_t seed,
                                  std::size_t per_tensor, double h = 1e-5) {
  EncoderNet<double> net = net0;
  std::mt19937_64 rng(seed);
  Tensor<double> w;
  auto value = [&](const EncoderNet<double>& n) {
    Tape<double> tape;
    tape.set_grad_enabled(false);
    const auto out = n.forward_prepared(tape, tape.constant(x));
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * out.q.value()[i];
    return s;
  };
  Tape<double> tape;
  const auto out = net.forward_prepared(tape, tape.constant(x));
  w = gaussian(out.q.shape(), rng);
  tape.backward(sum(mul(out.q, tape.constant(w))));
  double worst = 0.0;
  for (std::size_t p = 0; p < net.parameters().size(); ++p) {
    const Tensor<double> g = tape.grad(out.params[p]);
    Tensor<double>& v = net.parameters()[p].value;
    for (std::size_t c = 0; c < per_tensor; ++c) {
      const std::size_t i = pick(rng, 0, v.size() - 1);
      const double x0 = v[i];
      v[i] = x0 + h;
      const double fp = value(net);
      v[i] = x0 - h;
      const double fm = value(net);
      v[i] = x0;
      const double numeric = (fp - fm) / (2 * h);
      worst = std::max(worst, std::abs(g[i] - numeric) / std::max(1.0, std::abs(g[i])));
    }
  }
  return worst;
}

inline EncoderSpec small_hadamax() {
  EncoderSpec s = EncoderSpec::hadamax(3, 16, 16);
  s.hidden_width = 16;
  return s;
}

inline std::vector<Case> cases() {
  std::vector<Case> out;

  out.push_back({"matmul", [](std::uint64_t seed) {
                   std::mt19937_64 rng(seed);
                   const std::size_t m = pick(rng, 1, 6), k = pick(rng, 1, 6), n = pick(rng, 1, 6);
                   return Instance{[](Tape<double>&, std::span<const Var<double>> v) { return matmul(v[0], v[1]); },
                                   {gaussian({m, k}, rng), gaussian({k, n}, rng)}, {}};
                 }});
  out.push_back({"ewise_mul", [](std::uint64_t seed) {
                   std::mt19937_64 rng(seed);
                   const Shape s{pick(rng, 1, 4), pick(rng, 1, 5)};
                   return Instance{[](Tape<double>&, std::span<const Var<double>> v) { return mul(v[0], v[1]); },
                                   {gaussian(s, rng), gaussian(s, rng)}, {}};
                 }});
  out.push_back({"ewise_add", [](std::uint64_t seed) {
                   std::mt19937_64 rng(seed);
                   const Shape s{pick(rng, 1, 4), pick(rng, 1, 5), pick(rng, 1, 3)};
                   return Instance{[](Tape<double>&, std::span<const Var<double>> v) { return add(v[0], v[1]); },
                                   {gaussian(s, rng), gaussian(s, rng)}, {}};
                 }});
  for (ReduceKind kind : {ReduceKind::sum, ReduceKind::mean, ReduceKind::max}) {
    const std::string name = kind == ReduceKind::sum ? "reduce_sum" : kind == ReduceKind::mean ? "reduce_mean" : "reduce_max";
    out.push_back({name, [kind](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     const Shape s{pick(rng, 1, 4), pick(rng, 1, 4), pick(rng, 1, 4)};
                     std::vector<std::size_t> axes;
                     for (std::size_t a = 0; a < 3; ++a)
                       if (rng() & 1) axes.push_back(a);
                     auto x = kind == ReduceKind::max ? spread(s, rng) : gaussian(s, rng);
                     return Instance{[kind, axes](Tape<double>&, std::span<const Var<double>> v) {
                                       return reduce(v[0], kind, axes);
                                     },
                                     {x}, {}};
                   }});
  }
  out.push_back({"conv2d", [](std::uint64_t seed) {
                   std::mt19937_64 rng(seed);
                   const std::size_t b = pick(rng, 1, 2), h = pick(rng, 3, 7), w = pick(rng, 3, 7);
                   const std::size_t cin = pick(rng, 1, 3), cout = pick(rng, 1, 4), kk = pick(rng, 1, 4);
                   const nn::Stride2 st{pick(rng, 1, 3), pick(rng, 1, 3)};
                   FdOptions o;
                   o.max_coords = 40;
                   o.seed = seed;
                   return Instance{[st](Tape<double>&, std::span<const Var<double>> v) {
                                     return nn::conv2d(v[0], v[1], v[2], st);
                                   },
                                   {gaussian({b, h, w, cin}, rng), gaussian({kk, kk, cin, cout}, rng),
                                    gaussian({cout}, rng)},
                                   o};
                 }});
  out.push_back({"max_pool2d", [](std::uint64_t seed) {
                   std::mt19937_64 rng(seed);
                   const std::size_t win = pick(rng, 1, 4);
                   const Shape s{pick(rng, 1, 2), pick(rng, 2, 8), pick(rng, 2, 8), pick(rng, 1, 3)};
                   const nn::Stride2 stride{pick(rng, 1, win), pick(rng, 1, win)};
                   return Instance{[win, stride](Tape<double>&, std::span<const Var<double>> v) {
                                     return nn::max_pool2d(v[0], {win, win}, stride);
                                   },
                                   {spread(s, rng)}, {}};
                 }});
  out.push_back({"layer_norm", [](std::uint64_t seed) {
                   std::mt19937_64 rng(seed);
                   const std::size_t rows = pick(rng, 1, 4), f = pick(rng, 2, 9);
                   return Instance{[](Tape<double>&, std::span<const Var<double>> v) {
                                     return nn::layer_norm(v[0], v[1], v[2], 1e-5);
                                   },
                                   {gaussian({rows, f}, rng), gaussian({f}, rng), gaussian({f}, rng)}, {}};
                 }});
  out.push_back({"gelu", [](std::uint64_t seed) {
                   std::mt19937_64 rng(seed);
                   const Shape s{pick(rng, 1, 5), pick(rng, 1, 5)};
                   return Instance{[](Tape<double>&, std::span<const Var<double>> v) { return nn::gelu(v[0]); },
                                   {gaussian(s, rng, 2.0)}, {}};
                 }});
  out.push_back({"relu", [](std::uint64_t seed) {
                   std::mt19937_64 rng(seed);
                   const Shape s{pick(rng, 1, 5), pick(rng, 1, 5)};
                   return Instance{[](Tape<double>&, std::span<const Var<double>> v) { return nn::relu(v[0]); },
                                   {off_kink(s, rng)}, {}};
                 }});
  out.push_back({"dense", [](std::uint64_t seed) {
                   std::mt19937_64 rng(seed);
                   const std::size_t b = pick(rng, 1, 4), f = pick(rng, 1, 6), u = pick(rng, 1, 6);
                   return Instance{[](Tape<double>&, std::span<const Var<double>> v) {
                                     return nn::dense(v[0], v[1], v[2]);
                                   },
                                   {gaussian({b, f}, rng), gaussian({f, u}, rng), gaussian({u}, rng)}, {}};
                 }});
  out.push_back({"hadamax_forward", [](std::uint64_t seed) {
                   std::mt19937_64 rng(seed);
                   auto net = std::make_shared<EncoderNet<double>>(small_hadamax(), seed);
                   Tensor<double> x = gaussian({2, 16, 16, 4}, rng, 0.5);
                   FdOptions o;
                   o.max_coords = 24;
                   o.seed = seed;
                   return Instance{[net](Tape<double>&, std::span<const Var<double>> v) {
                                     return net->forward_prepared(v[0].tape(), v[0]).q;
                                   },
                                   {x}, o};
                 }});
  out.push_back({"pqn_loss", [](std::uint64_t seed) {
                   std::mt19937_64 rng(seed);
                   const std::size_t b = pick(rng, 1, 16);
                   auto targets = gaussian({b}, rng);
                   return Instance{[targets](Tape<double>&, std::span<const Var<double>> v) {
                                     return pqn::pqn_loss(v[0], targets);
                                   },
                                   {gaussian({b}, rng)}, {}};
                 }});
  return out;
}

}  // namespace gradsuite
