#pragma once

// The encoder zoo: Nature/PQN baseline, Hadamax, Impala ResNet-15 and the
// deeper Hadamax variants, all built from one declarative EncoderSpec.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hadamax/autodiff.hpp"
#include "hadamax/layers.hpp"

namespace hadamax {

enum class Variant { nature, hadamax, resnet15, hadamax_deep5, hadamax_deep7 };
enum class Activation { gelu, relu };
enum class NormKind { layer_norm, none };

std::string to_string(Variant v);
std::string to_string(Activation a);
std::string to_string(NormKind n);
Variant parse_variant(const std::string& s);
Activation parse_activation(const std::string& s);
NormKind parse_norm(const std::string& s);

struct EncoderSpec {
  Variant variant = Variant::hadamax;
  bool use_maxpool = true;
  bool use_hadamard = true;
  Activation activation = Activation::gelu;
  NormKind norm = NormKind::layer_norm;
  std::size_t stack = 4;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t action_dim = 1;
  std::size_t hidden_width = 512;

  /// Baseline PQN encoder: strided convs, ReLU, no pooling, single branch.
  static EncoderSpec nature(std::size_t action_dim, std::size_t h = 64, std::size_t w = 64);
  static EncoderSpec hadamax(std::size_t action_dim, std::size_t h = 64, std::size_t w = 64);
  static EncoderSpec resnet15(std::size_t action_dim, std::size_t h = 64, std::size_t w = 64);

  bool is_hadamax_family() const {
    return variant == Variant::hadamax || variant == Variant::hadamax_deep5 || variant == Variant::hadamax_deep7;
  }

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  /// Key/value form used by checkpoint manifests and run configs.
  std::map<std::string, std::string> to_manifest() const;
  static EncoderSpec from_manifest(const std::map<std::string, std::string>& kv);

  bool operator==(const EncoderSpec&) const = default;
};

/// One convolutional stage of the plain (non-residual) family.
struct ConvStage {
  std::size_t channels = 0;
  std::size_t kernel = 0;
  std::size_t conv_stride = 1;
  std::size_t pool_window = 0;  // 0: no pooling
  std::size_t pool_stride = 0;
  bool hadamard = false;
};

/// Stage list the spec resolves to (empty for resnet15).
std::vector<ConvStage> conv_plan(const EncoderSpec& spec);

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;
};

template <typename T>
class EncoderNet {
 public:
  struct Output {
    Var<T> q;                     // [B, action_dim]
    std::vector<Var<T>> probes;   // hidden layers watched by the diagnostics
    std::vector<Var<T>> params;   // tape handles, same order as parameters()
    std::vector<Shape> trace;     // output shape of every conv stage
  };

  EncoderNet(EncoderSpec spec, std::uint64_t seed);

  const EncoderSpec& spec() const noexcept { return spec_; }
  std::vector<NamedTensor<T>>& parameters() noexcept { return params_; }
  const std::vector<NamedTensor<T>>& parameters() const noexcept { return params_; }
  std::size_t param_count() const;

  /// obs: [B, stack, H, W] raw pixels in [0, 255]. Scales by 1/255 and moves
  /// the stack axis to channels before the first conv.
  Output forward(Tape<T>& tape, const Tensor<T>& obs) const;

  /// Same as forward() but starting from an already prepared [B, H, W, stack]
  /// input node.
  Output forward_prepared(Tape<T>& tape, const Var<T>& x) const;

  /// Q-values without recording gradients.
  Tensor<T> q_values(const Tensor<T>& obs) const;

  template <typename U>
  EncoderNet<U> cast() const {
    EncoderNet<U> out(spec_, 0);
    for (std::size_t i = 0; i < params_.size(); ++i) out.parameters()[i].value = params_[i].value.template cast<U>();
    return out;
  }

 private:
  EncoderSpec spec_;
  std::vector<NamedTensor<T>> params_;
};

/// Scales to [0, 1] and transposes [B, S, H, W] to [B, H, W, S].
template <typename T>
Tensor<T> prepare_observation(const Tensor<T>& obs);

template <typename T>
EncoderNet<T> build(const EncoderSpec& spec, std::uint64_t seed) {
  return EncoderNet<T>(spec, seed);
}

// Checkpoint: text manifest (spec as key=value lines) followed by the parameter
// tensors as binary records, in parameter order.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const EncoderNet<T>& net,
                     const std::map<std::string, std::string>& extra = {});

/// Loads a checkpoint; when `expected` is given the stored spec must match it.
/// Every tensor shape is checked against a freshly built net.
template <typename T>
EncoderNet<T> load_checkpoint(const std::filesystem::path& path, const std::optional<EncoderSpec>& expected = {},
                              std::map<std::string, std::string>* manifest = nullptr);

extern template class EncoderNet<float>;
extern template class EncoderNet<double>;

}  // namespace hadamax
