#include "hadamax/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "hadamax/kernels.hpp"

namespace hadamax {

// ---- Tape ------------------------------------------------------------------

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.op = "constant";
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value) {
  Node n;
  n.op = "leaf";
  n.owned = std::move(value);
  n.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::param(const Tensor<T>& external) {
  Node n;
  n.op = "param";
  n.external = &external;
  n.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(std::string_view op, Tensor<T> value, std::vector<std::size_t> inputs, BackwardFn fn) {
  Node n;
  n.op = op;
  n.owned = std::move(value);
  bool needs = false;
  for (std::size_t id : inputs) {
    if (id >= nodes_.size()) throw std::logic_error("tape input id out of range");
    needs = needs || nodes_[id].requires_grad;
  }
  n.requires_grad = grad_enabled_ && needs;
  if (n.requires_grad) n.backward = std::move(fn);
  n.inputs = std::move(inputs);
  nodes_.push_back(std::move(n));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
const Tensor<T>& Tape<T>::value(std::size_t id) const {
  const Node& n = nodes_.at(id);
  return n.external ? *n.external : n.owned;
}

template <typename T>
T* Tape<T>::grad_buffer(std::size_t id) {
  if (!nodes_.at(id).requires_grad) return nullptr;
  if (!touched_[id]) {
    grads_[id] = Tensor<T>(value(id).shape());
    touched_[id] = true;
  }
  return grads_[id].raw();
}

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
  if (&loss.tape() != this) throw std::invalid_argument("loss belongs to a different tape");
  if (loss.value().size() != 1)
    throw ShapeError("backward needs a scalar loss, got shape " + shape_string(loss.shape()));
  grads_.assign(nodes_.size(), Tensor<T>());
  touched_.assign(nodes_.size(), false);
  if (!nodes_[loss.id()].requires_grad) return;
  grad_buffer(loss.id())[0] = T{1};
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.backward && touched_[id]) n.backward(*this, id);
  }
}

template <typename T>
Tensor<T> Tape<T>::grad(const Var<T>& v) const {
  if (v.id() < touched_.size() && touched_[v.id()]) return grads_[v.id()];
  return Tensor<T>(v.shape());
}

template class Tape<float>;
template class Tape<double>;

// ---- operations ------------------------------------------------------------

namespace {

template <typename T>
void same_tape(const Var<T>& a, const Var<T>& b) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument("operands live on different tapes");
}

}  // namespace

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.extent(1) != bv.extent(0))
    throw ShapeError("matmul shape mismatch " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  const std::size_t m = av.extent(0), k = av.extent(1), n = bv.extent(1);
  Tensor<T> out({m, n});
  kernels::gemm(m, n, k, av.raw(), k, bv.raw(), n, out.raw(), n);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record("matmul", std::move(out), {ia, ib}, [=](Tape<T>& tape, std::size_t self) {
    const auto& g = tape.grad_of(self);
    const auto& A = tape.value(ia);
    const auto& B = tape.value(ib);
    if (T* ga = tape.grad_buffer(ia)) {
      std::vector<T> bt(k * n);
      kernels::transpose(k, n, B.raw(), bt.data());
      kernels::gemm(m, k, n, g.raw(), n, bt.data(), k, ga, k);
    }
    if (T* gb = tape.grad_buffer(ib)) {
      std::vector<T> at(m * k);
      kernels::transpose(m, k, A.raw(), at.data());
      kernels::gemm(k, n, m, at.data(), m, g.raw(), n, gb, n);
    }
  });
}

template <typename T>
Var<T> ewise(const Var<T>& a, const Var<T>& b, EwiseKind kind) {
  same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.shape() != bv.shape())
    throw ShapeError("elementwise shape mismatch " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  const std::size_t n = av.size();
  Tensor<T> out(av.shape());
  if (kind == EwiseKind::mul) {
    kernels::hadamard(n, av.raw(), bv.raw(), out.raw());
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = av[i] + bv[i];
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(kind == EwiseKind::mul ? "mul" : "add", std::move(out), {ia, ib},
                         [=](Tape<T>& tape, std::size_t self) {
                           const auto& g = tape.grad_of(self);
                           if (kind == EwiseKind::add) {
                             if (T* ga = tape.grad_buffer(ia)) kernels::axpy(n, T{1}, g.raw(), ga);
                             if (T* gb = tape.grad_buffer(ib)) kernels::axpy(n, T{1}, g.raw(), gb);
                             return;
                           }
                           const auto& A = tape.value(ia);
                           const auto& B = tape.value(ib);
                           if (T* ga = tape.grad_buffer(ia))
                             for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * B[i];
                           if (T* gb = tape.grad_buffer(ib))
                             for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * A[i];
                         });
}

template <typename T>
Var<T> reduce(const Var<T>& x, ReduceKind kind, std::vector<std::size_t> axes) {
  const auto& xv = x.value();
  const Shape& shape = xv.shape();
  const std::size_t rank = shape.size();
  if (axes.empty()) {
    axes.resize(rank);
    std::iota(axes.begin(), axes.end(), 0);
  }
  std::vector<bool> reduced(rank, false);
  for (std::size_t ax : axes) {
    if (ax >= rank) throw ShapeError("reduction axis " + std::to_string(ax) + " out of range");
    if (shape[ax] == 0) throw ShapeError("empty reduction axis " + std::to_string(ax));
    reduced[ax] = true;
  }
  Shape out_shape;
  for (std::size_t d = 0; d < rank; ++d)
    if (!reduced[d]) out_shape.push_back(shape[d]);

  // Map every input element to its output slot.
  const std::size_t n = xv.size();
  std::vector<std::size_t> slot(n);
  {
    std::vector<std::size_t> idx(rank, 0);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t o = 0;
      for (std::size_t d = 0; d < rank; ++d)
        if (!reduced[d]) o = o * shape[d] + idx[d];
      slot[i] = o;
      for (std::size_t d = rank; d-- > 0;) {
        if (++idx[d] < shape[d]) break;
        idx[d] = 0;
      }
    }
  }
  Tensor<T> out(out_shape);
  const std::size_t count = out.size() == 0 ? 0 : n / out.size();
  std::vector<std::size_t> argmax;
  if (kind == ReduceKind::max) {
    argmax.assign(out.size(), n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t& best = argmax[slot[i]];
      if (best == n || xv[i] > xv[best]) best = i;
    }
    for (std::size_t o = 0; o < out.size(); ++o) out[o] = xv[argmax[o]];
  } else {
    for (std::size_t i = 0; i < n; ++i) out[slot[i]] += xv[i];
    if (kind == ReduceKind::mean)
      for (auto& v : out.data()) v /= static_cast<T>(count);
  }
  const std::size_t ix = x.id();
  const char* name = kind == ReduceKind::sum ? "sum" : kind == ReduceKind::mean ? "mean" : "max";
  return x.tape().record(name, std::move(out), {ix},
                         [=, slot = std::move(slot), argmax = std::move(argmax)](Tape<T>& tape, std::size_t self) {
                           T* gx = tape.grad_buffer(ix);
                           if (!gx) return;
                           const auto& g = tape.grad_of(self);
                           if (kind == ReduceKind::max) {
                             for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += g[o];
                             return;
                           }
                           const T w = kind == ReduceKind::mean ? T{1} / static_cast<T>(count) : T{1};
                           for (std::size_t i = 0; i < slot.size(); ++i) gx[i] += w * g[slot[i]];
                         });
}

template <typename T>
Var<T> scale(const Var<T>& x, T factor) {
  const auto& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = factor * xv[i];
  const std::size_t ix = x.id();
  const std::size_t n = xv.size();
  return x.tape().record("scale", std::move(out), {ix}, [=](Tape<T>& tape, std::size_t self) {
    if (T* gx = tape.grad_buffer(ix)) kernels::axpy(n, factor, tape.grad_of(self).raw(), gx);
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  const std::size_t ix = x.id();
  const std::size_t n = out.size();
  return x.tape().record("reshape", std::move(out), {ix}, [=](Tape<T>& tape, std::size_t self) {
    if (T* gx = tape.grad_buffer(ix)) kernels::axpy(n, T{1}, tape.grad_of(self).raw(), gx);
  });
}

template <typename T>
Var<T> tile(const Var<T>& x, const std::vector<std::size_t>& reps) {
  const auto& xv = x.value();
  const Shape& in_shape = xv.shape();
  if (reps.size() != in_shape.size()) throw ShapeError("tile reps rank mismatch");
  Shape out_shape(in_shape.size());
  for (std::size_t d = 0; d < in_shape.size(); ++d) {
    if (reps[d] == 0) throw ShapeError("tile repetition must be positive");
    out_shape[d] = in_shape[d] * reps[d];
  }
  Tensor<T> out(out_shape);
  const std::size_t rank = in_shape.size();
  std::vector<std::size_t> source(out.size());
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t o = 0; o < out.size(); ++o) {
    std::size_t s = 0;
    for (std::size_t d = 0; d < rank; ++d) s = s * in_shape[d] + idx[d] % in_shape[d];
    source[o] = s;
    out[o] = xv[s];
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
    }
  }
  const std::size_t ix = x.id();
  return x.tape().record("tile", std::move(out), {ix}, [=, source = std::move(source)](Tape<T>& tape, std::size_t self) {
    T* gx = tape.grad_buffer(ix);
    if (!gx) return;
    const auto& g = tape.grad_of(self);
    for (std::size_t o = 0; o < source.size(); ++o) gx[source[o]] += g[o];
  });
}

template <typename T>
Var<T> take_along(const Var<T>& x, std::span<const std::int32_t> index) {
  const auto& xv = x.value();
  if (xv.rank() != 2 || xv.extent(0) != index.size())
    throw ShapeError("take_along expects [B,A] with B indices, got " + shape_string(xv.shape()));
  const std::size_t rows = xv.extent(0), cols = xv.extent(1);
  std::vector<std::size_t> pos(rows);
  Tensor<T> out({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    if (index[r] < 0 || static_cast<std::size_t>(index[r]) >= cols)
      throw std::out_of_range("take_along index " + std::to_string(index[r]) + " out of range");
    pos[r] = r * cols + static_cast<std::size_t>(index[r]);
    out[r] = xv[pos[r]];
  }
  const std::size_t ix = x.id();
  return x.tape().record("take_along", std::move(out), {ix}, [=, pos = std::move(pos)](Tape<T>& tape, std::size_t self) {
    T* gx = tape.grad_buffer(ix);
    if (!gx) return;
    const auto& g = tape.grad_of(self);
    for (std::size_t r = 0; r < pos.size(); ++r) gx[pos[r]] += g[r];
  });
}

#define HADAMAX_INSTANTIATE_OPS(T)                                               \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                          \
  template Var<T> ewise(const Var<T>&, const Var<T>&, EwiseKind);                \
  template Var<T> reduce(const Var<T>&, ReduceKind, std::vector<std::size_t>);   \
  template Var<T> scale(const Var<T>&, T);                                       \
  template Var<T> reshape(const Var<T>&, Shape);                                 \
  template Var<T> tile(const Var<T>&, const std::vector<std::size_t>&);          \
  template Var<T> take_along(const Var<T>&, std::span<const std::int32_t>);

HADAMAX_INSTANTIATE_OPS(float)
HADAMAX_INSTANTIATE_OPS(double)
#undef HADAMAX_INSTANTIATE_OPS

// ---- finite differences ----------------------------------------------------

namespace {

struct Scalarized {
  Tensor<double> weights;
  bool contract = false;
};

double evaluate(const FdGraph& graph, const std::vector<Tensor<double>>& inputs, Scalarized& sc) {
  Tape<double> tape;
  tape.set_grad_enabled(false);
  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  const Var<double> out = graph(tape, vars);
  const auto& ov = out.value();
  if (!sc.contract) return ov.item();
  double acc = 0.0;
  for (std::size_t i = 0; i < ov.size(); ++i) acc += ov[i] * sc.weights[i];
  return acc;
}

}  // namespace

double fd_check(const FdGraph& graph, const std::vector<Tensor<double>>& inputs, const FdOptions& opts) {
  // Analytic pass.
  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.push_back(tape.leaf(t));
  Var<double> out = graph(tape, vars);
  Scalarized sc;
  if (out.value().size() != 1) {
    sc.contract = true;
    sc.weights = Tensor<double>::create(out.shape(), fill::Gaussian{0.0, 1.0, opts.seed});
    out = sum(mul(out, tape.constant(sc.weights)));
  }
  tape.backward(out);

  std::mt19937_64 rng(opts.seed ^ 0x9e3779b97f4a7c15ULL);
  double worst = 0.0;
  std::vector<Tensor<double>> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor<double> analytic = tape.grad(vars[k]);
    const std::size_t n = inputs[k].size();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), 0);
    if (opts.max_coords != 0 && opts.max_coords < n) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.max_coords);
    }
    for (std::size_t c : coords) {
      const double x0 = inputs[k][c];
      probe[k][c] = x0 + opts.h;
      const double fp = evaluate(graph, probe, sc);
      probe[k][c] = x0 - opts.h;
      const double fm = evaluate(graph, probe, sc);
      probe[k][c] = x0;
      const double numeric = (fp - fm) / (2.0 * opts.h);
      const double err = std::abs(analytic[c] - numeric) / std::max(1.0, std::abs(analytic[c]));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace hadamax
