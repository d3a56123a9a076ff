#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace hadamax {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Number of elements described by `shape`; throws ShapeError on overflow.
std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace fill {
struct Zeros {};
struct Constant {
  double value = 0.0;
};
struct Gaussian {
  double mean = 0.0;
  double stddev = 1.0;
  std::uint64_t seed = 0;
};
}  // namespace fill

using Fill = std::variant<fill::Zeros, fill::Constant, fill::Gaussian>;

/// Dense row-major array. Plain value type; graph membership lives in Var.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<T> data);

  static Tensor create(Shape shape, const Fill& how = fill::Zeros{});
  static Tensor scalar(T value) { return Tensor({}, {value}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* raw() noexcept { return data_.data(); }
  const T* raw() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Scalar value of a one-element tensor.
  T item() const;

  /// Same data, new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  void fill_value(T value);

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// Precision code stored in the binary record.
enum class Precision : std::uint8_t { f32 = 1, f64 = 2 };

template <typename T>
constexpr Precision precision_of();
template <>
constexpr Precision precision_of<float>() { return Precision::f32; }
template <>
constexpr Precision precision_of<double>() { return Precision::f64; }

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary record: "HDXT", u8 precision, u8 rank, u64 extents (LE), row-major payload (LE).
template <typename T>
void write_tensor(std::ostream& out, const Tensor<T>& t);
template <typename T>
Tensor<T> read_tensor(std::istream& in);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace hadamax
