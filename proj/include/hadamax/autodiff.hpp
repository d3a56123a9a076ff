#pragma once

// Reverse-mode differentiation over a dynamically recorded tape.
//
// A Tape owns an append-only list of nodes. Each node holds its forward value,
// the ids of its inputs (always smaller than its own id) and, when any input
// requires a gradient, a closure that pushes the node's gradient back into its
// inputs. backward() walks the list once in reverse.

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hadamax/tensor.hpp"

namespace hadamax {

template <typename T>
class Tape;

/// Handle to a node of a live tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const noexcept { return tape_ != nullptr; }
  std::size_t id() const noexcept { return id_; }
  Tape<T>& tape() const { return *tape_; }

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Input that never receives a gradient.
  Var<T> constant(Tensor<T> value);
  /// Owned input that receives a gradient.
  Var<T> leaf(Tensor<T> value);
  /// Non-owning gradient-receiving input; `external` must outlive the tape.
  Var<T> param(const Tensor<T>& external);

  /// Appends an operation node. `fn` is dropped when no input needs a gradient.
  Var<T> record(std::string_view op, Tensor<T> value, std::vector<std::size_t> inputs, BackwardFn fn);

  std::size_t size() const noexcept { return nodes_.size(); }
  const Tensor<T>& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::string_view op(std::size_t id) const { return nodes_.at(id).op; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }

  /// Reverse sweep from a scalar loss. Clears gradients from any previous sweep.
  void backward(const Var<T>& loss);

  /// Gradient of the last backward() w.r.t. `v`; zeros when `v` was not reached.
  Tensor<T> grad(const Var<T>& v) const;

  // Used inside backward closures.
  const Tensor<T>& grad_of(std::size_t id) const { return grads_.at(id); }
  /// Gradient accumulator of input `id`, or nullptr when it needs no gradient.
  T* grad_buffer(std::size_t id);

  /// While false, recorded nodes never require gradients (inference mode).
  void set_grad_enabled(bool on) noexcept { grad_enabled_ = on; }
  bool grad_enabled() const noexcept { return grad_enabled_; }

  /// Per-tape memo for buffers shared between sibling operations.
  template <typename V>
  std::shared_ptr<V> memo(const std::string& key, const std::function<std::shared_ptr<V>()>& make) {
    auto it = memo_.find(key);
    if (it != memo_.end()) return std::static_pointer_cast<V>(it->second);
    auto made = make();
    memo_.emplace(key, made);
    return made;
  }

 private:
  struct Node {
    std::string_view op;
    std::vector<std::size_t> inputs;
    Tensor<T> owned;
    const Tensor<T>* external = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
  std::vector<Tensor<T>> grads_;
  std::vector<bool> touched_;
  std::map<std::string, std::shared_ptr<void>> memo_;
  bool grad_enabled_ = true;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}
template <typename T>
bool Var<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}

// ---- core operations -------------------------------------------------------

enum class EwiseKind { mul, add };
enum class ReduceKind { sum, mean, max };

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);

/// Equal-shape elementwise op; mul is the Hadamard product.
template <typename T>
Var<T> ewise(const Var<T>& a, const Var<T>& b, EwiseKind kind);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) { return ewise(a, b, EwiseKind::mul); }
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) { return ewise(a, b, EwiseKind::add); }

/// Reduces over `axes` (empty = all) and drops them. max routes the gradient
/// to the first maximal element in row-major order.
template <typename T>
Var<T> reduce(const Var<T>& x, ReduceKind kind, std::vector<std::size_t> axes = {});
template <typename T>
Var<T> sum(const Var<T>& x) { return reduce(x, ReduceKind::sum); }
template <typename T>
Var<T> mean(const Var<T>& x) { return reduce(x, ReduceKind::mean); }

template <typename T>
Var<T> scale(const Var<T>& x, T factor);
template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);
/// Repeats `x` reps[i] times along axis i (explicit broadcasting).
template <typename T>
Var<T> tile(const Var<T>& x, const std::vector<std::size_t>& reps);
/// out[b] = x[b, index[b]] for x of shape [B, A].
template <typename T>
Var<T> take_along(const Var<T>& x, std::span<const std::int32_t> index);

// ---- finite-difference verification ----------------------------------------

struct FdOptions {
  double h = 1e-5;
  /// Coordinates probed per input; 0 probes all of them.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0x5eed;
};

using FdGraph = std::function<Var<double>(Tape<double>&, std::span<const Var<double>>)>;

/// Largest |analytic - central difference| / max(1, |analytic|) over the probed
/// input coordinates. A non-scalar graph output is contracted with fixed random
/// weights first.
double fd_check(const FdGraph& graph, const std::vector<Tensor<double>>& inputs, const FdOptions& opts = {});

}  // namespace hadamax
