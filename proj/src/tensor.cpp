#include "hadamax/tensor.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

namespace hadamax {

static_assert(std::endian::native == std::endian::little,
              "tensor serialization assumes a little-endian host");

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) {
    if (e != 0 && n > std::numeric_limits<std::size_t>::max() / e)
      throw ShapeError("shape " + shape_string(shape) + " overflows element count");
    n *= e;
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), T{0}) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size())
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_string(shape_));
}

template <typename T>
Tensor<T> Tensor<T>::create(Shape shape, const Fill& how) {
  Tensor t(std::move(shape));
  if (const auto* c = std::get_if<fill::Constant>(&how)) {
    t.fill_value(static_cast<T>(c->value));
  } else if (const auto* g = std::get_if<fill::Gaussian>(&how)) {
    std::mt19937_64 rng(g->seed);
    std::normal_distribution<double> dist(g->mean, g->stddev);
    for (auto& v : t.data_) v = static_cast<T>(dist(rng));
  }
  return t;
}

template <typename T>
T Tensor<T>::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size())
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  return Tensor(std::move(shape), data_);
}

template <typename T>
void Tensor<T>::fill_value(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

namespace {

constexpr std::array<char, 4> kMagic{'H', 'D', 'X', 'T'};

template <typename U>
void put(std::ostream& out, U v) {
  auto bytes = std::bit_cast<std::array<char, sizeof(U)>>(v);
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get(std::istream& in) {
  std::array<char, sizeof(U)> bytes{};
  if (!in.read(bytes.data(), bytes.size())) throw FormatError("truncated tensor record");
  return std::bit_cast<U>(bytes);
}

template <typename Src, typename T>
void read_payload(std::istream& in, std::vector<T>& dst) {
  if constexpr (std::is_same_v<Src, T>) {
    if (!in.read(reinterpret_cast<char*>(dst.data()), static_cast<std::streamsize>(dst.size() * sizeof(T))))
      throw FormatError("truncated tensor payload");
  } else {
    std::vector<Src> tmp(dst.size());
    if (!in.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(tmp.size() * sizeof(Src))))
      throw FormatError("truncated tensor payload");
    for (std::size_t i = 0; i < tmp.size(); ++i) dst[i] = static_cast<T>(tmp[i]);
  }
}

}  // namespace

template <typename T>
void write_tensor(std::ostream& out, const Tensor<T>& t) {
  if (t.rank() > 255) throw FormatError("rank too large for tensor record");
  out.write(kMagic.data(), kMagic.size());
  put<std::uint8_t>(out, static_cast<std::uint8_t>(precision_of<T>()));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
  for (std::size_t e : t.shape()) put<std::uint64_t>(out, e);
  out.write(reinterpret_cast<const char*>(t.raw()), static_cast<std::streamsize>(t.size() * sizeof(T)));
  if (!out) throw FormatError("failed writing tensor record");
}

template <typename T>
Tensor<T> read_tensor(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw FormatError("bad tensor magic");
  const auto code = get<std::uint8_t>(in);
  const auto rank = get<std::uint8_t>(in);
  Shape shape(rank);
  for (auto& e : shape) e = static_cast<std::size_t>(get<std::uint64_t>(in));
  Tensor<T> t(std::move(shape));
  std::vector<T> buf(t.size());
  switch (static_cast<Precision>(code)) {
    case Precision::f32: read_payload<float>(in, buf); break;
    case Precision::f64: read_payload<double>(in, buf); break;
    default: throw FormatError("unknown precision code " + std::to_string(code));
  }
  return Tensor<T>(t.shape(), std::move(buf));
}

template class Tensor<float>;
template class Tensor<double>;
template void write_tensor(std::ostream&, const Tensor<float>&);
template void write_tensor(std::ostream&, const Tensor<double>&);
template Tensor<float> read_tensor(std::istream&);
template Tensor<double> read_tensor(std::istream&);

}  // namespace hadamax
