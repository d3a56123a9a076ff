#include "hadamax/encoders.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hadamax {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::nature: return "nature";
    case Variant::hadamax: return "hadamax";
    case Variant::resnet15: return "resnet15";
    case Variant::hadamax_deep5: return "hadamax_deep5";
    case Variant::hadamax_deep7: return "hadamax_deep7";
  }
  return "?";
}
std::string to_string(Activation a) { return a == Activation::gelu ? "gelu" : "relu"; }
std::string to_string(NormKind n) { return n == NormKind::layer_norm ? "layer_norm" : "none"; }

Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::nature, Variant::hadamax, Variant::resnet15, Variant::hadamax_deep5, Variant::hadamax_deep7})
    if (to_string(v) == s) return v;
  throw std::invalid_argument("encoder.variant: unknown variant '" + s + "'");
}
Activation parse_activation(const std::string& s) {
  if (s == "gelu") return Activation::gelu;
  if (s == "relu") return Activation::relu;
  throw std::invalid_argument("encoder.activation: unknown activation '" + s + "'");
}
NormKind parse_norm(const std::string& s) {
  if (s == "layer_norm") return NormKind::layer_norm;
  if (s == "none") return NormKind::none;
  throw std::invalid_argument("encoder.norm: unknown norm '" + s + "'");
}

EncoderSpec EncoderSpec::nature(std::size_t action_dim, std::size_t h, std::size_t w) {
  EncoderSpec s;
  s.variant = Variant::nature;
  s.use_maxpool = false;
  s.use_hadamard = false;
  s.activation = Activation::relu;
  s.action_dim = action_dim;
  s.height = h;
  s.width = w;
  return s;
}

EncoderSpec EncoderSpec::hadamax(std::size_t action_dim, std::size_t h, std::size_t w) {
  EncoderSpec s;
  s.action_dim = action_dim;
  s.height = h;
  s.width = w;
  return s;
}

EncoderSpec EncoderSpec::resnet15(std::size_t action_dim, std::size_t h, std::size_t w) {
  EncoderSpec s = nature(action_dim, h, w);
  s.variant = Variant::resnet15;
  return s;
}

void EncoderSpec::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument(m); };
  if (!is_hadamax_family()) {
    if (use_maxpool) fail("encoder.use_maxpool: only the hadamax variants take ablation flags");
    if (use_hadamard) fail("encoder.use_hadamard: only the hadamax variants take ablation flags");
    if (activation != Activation::relu) fail("encoder.activation: only the hadamax variants take ablation flags");
  }
  if (stack == 0) fail("encoder.stack: must be positive");
  if (height < 16 || width < 16) fail("encoder.height/width: input must be at least 16x16");
  if (action_dim == 0) fail("encoder.action_dim: must be positive");
  if (hidden_width == 0) fail("encoder.hidden_width: must be positive");
}

std::map<std::string, std::string> EncoderSpec::to_manifest() const {
  return {
      {"encoder.variant", to_string(variant)},
      {"encoder.use_maxpool", use_maxpool ? "true" : "false"},
      {"encoder.use_hadamard", use_hadamard ? "true" : "false"},
      {"encoder.activation", to_string(activation)},
      {"encoder.norm", to_string(norm)},
      {"encoder.stack", std::to_string(stack)},
      {"encoder.height", std::to_string(height)},
      {"encoder.width", std::to_string(width)},
      {"encoder.action_dim", std::to_string(action_dim)},
      {"encoder.hidden_width", std::to_string(hidden_width)},
  };
}

namespace {

const std::string& need(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw std::invalid_argument(key + ": missing from manifest");
  return it->second;
}

bool parse_flag(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument(key + ": expected true/false, got '" + v + "'");
}

std::size_t parse_count(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long n = 0;
  try {
    n = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size() || v.front() == '-') throw std::invalid_argument(key + ": expected a count, got '" + v + "'");
  return static_cast<std::size_t>(n);
}

}  // namespace

EncoderSpec EncoderSpec::from_manifest(const std::map<std::string, std::string>& kv) {
  EncoderSpec s;
  s.variant = parse_variant(need(kv, "encoder.variant"));
  s.use_maxpool = parse_flag("encoder.use_maxpool", need(kv, "encoder.use_maxpool"));
  s.use_hadamard = parse_flag("encoder.use_hadamard", need(kv, "encoder.use_hadamard"));
  s.activation = parse_activation(need(kv, "encoder.activation"));
  s.norm = parse_norm(need(kv, "encoder.norm"));
  s.stack = parse_count("encoder.stack", need(kv, "encoder.stack"));
  s.height = parse_count("encoder.height", need(kv, "encoder.height"));
  s.width = parse_count("encoder.width", need(kv, "encoder.width"));
  s.action_dim = parse_count("encoder.action_dim", need(kv, "encoder.action_dim"));
  s.hidden_width = parse_count("encoder.hidden_width", need(kv, "encoder.hidden_width"));
  s.validate();
  return s;
}

std::vector<ConvStage> conv_plan(const EncoderSpec& spec) {
  if (spec.variant == Variant::resnet15) return {};
  const bool pool = spec.is_hadamax_family() && spec.use_maxpool;
  const bool hada = spec.is_hadamax_family() && spec.use_hadamard;
  // Without pooling the convs keep the Nature strides 4, 2, 1.
  const ConvStage first{32, 8, pool ? 1u : 4u, pool ? 4u : 0u, pool ? 4u : 0u, hada};
  const ConvStage second{64, 4, pool ? 1u : 2u, pool ? 2u : 0u, pool ? 2u : 0u, hada};
  const ConvStage third{64, 3, 1, pool ? 3u : 0u, pool ? 1u : 0u, hada};
  const ConvStage second_dup{64, 4, 1, 0, 0, hada};
  const ConvStage third_dup{64, 3, 1, 0, 0, hada};
  std::size_t copies = 0;
  if (spec.variant == Variant::hadamax_deep5) copies = 1;
  if (spec.variant == Variant::hadamax_deep7) copies = 2;
  std::vector<ConvStage> plan{first, second};
  for (std::size_t i = 0; i < copies; ++i) plan.push_back(second_dup);
  plan.push_back(third);
  for (std::size_t i = 0; i < copies; ++i) plan.push_back(third_dup);
  return plan;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::size_t kResnetWidths[] = {16, 32, 32};

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

template <typename T>
class ParamBuilder {
 public:
  ParamBuilder(std::vector<NamedTensor<T>>& out, std::uint64_t seed) : out_(out), seed_(seed) {}

  void weight(const std::string& name, nn::InitKind kind, const Shape& shape) {
    out_.push_back({name, nn::init<T>(kind, shape, splitmix64(seed_ + out_.size()))});
  }
  void zeros(const std::string& name, const Shape& shape) { out_.push_back({name, Tensor<T>(shape)}); }
  void ones(const std::string& name, const Shape& shape) {
    out_.push_back({name, Tensor<T>::create(shape, fill::Constant{1.0})});
  }
  void conv(const std::string& name, std::size_t k, std::size_t cin, std::size_t cout, nn::InitKind kind) {
    weight(name + ".kernel", kind, {k, k, cin, cout});
    zeros(name + ".bias", {cout});
  }
  void norm(const std::string& name, std::size_t width, bool enabled) {
    if (!enabled) return;
    ones(name + ".gain", {width});
    zeros(name + ".offset", {width});
  }

 private:
  std::vector<NamedTensor<T>>& out_;
  std::uint64_t seed_;
};

// Walks parameters in construction order while the forward pass consumes them.
template <typename T>
class ParamCursor {
 public:
  ParamCursor(Tape<T>& tape, const std::vector<NamedTensor<T>>& params, std::vector<Var<T>>& handles)
      : tape_(tape), params_(params), handles_(handles) {}
  Var<T> next() {
    Var<T> v = tape_.param(params_.at(handles_.size()).value);
    handles_.push_back(v);
    return v;
  }

 private:
  Tape<T>& tape_;
  const std::vector<NamedTensor<T>>& params_;
  std::vector<Var<T>>& handles_;
};

template <typename T>
Var<T> activate(const Var<T>& x, Activation a) {
  return a == Activation::gelu ? nn::gelu(x) : nn::relu(x);
}

template <typename T>
Var<T> conv_norm(ParamCursor<T>& cur, const Var<T>& x, std::size_t stride, bool norm) {
  Var<T> k = cur.next();
  Var<T> b = cur.next();
  Var<T> y = nn::conv2d(x, k, b, {stride, stride});
  if (norm) {
    Var<T> g = cur.next();
    Var<T> o = cur.next();
    y = nn::layer_norm(y, g, o, T(1e-5));
  }
  return y;
}

}  // namespace

template <typename T>
EncoderNet<T>::EncoderNet(EncoderSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  ParamBuilder<T> pb(params_, seed);
  const bool norm = spec_.norm == NormKind::layer_norm;
  std::size_t h = spec_.height, w = spec_.width, c = spec_.stack;
  if (spec_.variant == Variant::resnet15) {
    for (std::size_t s = 0; s < 3; ++s) {
      const std::string stage = "stage" + std::to_string(s + 1);
      const std::size_t width = kResnetWidths[s];
      pb.conv(stage + ".conv", 3, c, width, nn::InitKind::xavier_normal);
      pb.norm(stage + ".conv.norm", width, norm);
      for (int r = 0; r < 2; ++r) {
        const std::string blk = stage + ".res" + std::to_string(r + 1);
        pb.conv(blk + ".conv1", 3, width, width, nn::InitKind::xavier_normal);
        pb.norm(blk + ".conv1.norm", width, norm);
        pb.conv(blk + ".conv2", 3, width, width, nn::InitKind::xavier_normal);
        pb.norm(blk + ".conv2.norm", width, norm);
      }
      c = width;
      h = ceil_div(h, 2);
      w = ceil_div(w, 2);
    }
  } else {
    const auto plan = conv_plan(spec_);
    for (std::size_t i = 0; i < plan.size(); ++i) {
      const ConvStage& st = plan[i];
      const std::string name = "block" + std::to_string(i + 1);
      const int branches = st.hadamard ? 2 : 1;
      for (int br = 0; br < branches; ++br) {
        const std::string bname = name + (br == 0 ? ".a" : ".b");
        pb.conv(bname, st.kernel, c, st.channels, nn::InitKind::xavier_normal);
        pb.norm(bname + ".norm", st.channels, norm);
      }
      c = st.channels;
      h = ceil_div(h, st.conv_stride);
      w = ceil_div(w, st.conv_stride);
      if (st.pool_window) {
        h = ceil_div(h, st.pool_stride);
        w = ceil_div(w, st.pool_stride);
      }
    }
  }
  const std::size_t flat = h * w * c;
  pb.weight("dense.kernel", nn::InitKind::he_normal, {flat, spec_.hidden_width});
  pb.zeros("dense.bias", {spec_.hidden_width});
  pb.norm("dense.norm", spec_.hidden_width, norm);
  pb.weight("head.kernel", nn::InitKind::lecun_normal, {spec_.hidden_width, spec_.action_dim});
  pb.zeros("head.bias", {spec_.action_dim});
}

template <typename T>
std::size_t EncoderNet<T>::param_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
Tensor<T> prepare_observation(const Tensor<T>& obs) {
  if (obs.rank() != 4) throw ShapeError("observation batch must be [B,S,H,W], got " + shape_string(obs.shape()));
  const std::size_t B = obs.extent(0), S = obs.extent(1), H = obs.extent(2), W = obs.extent(3);
  Tensor<T> out({B, H, W, S});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t s = 0; s < S; ++s) {
      const T* src = obs.raw() + (b * S + s) * H * W;
      for (std::size_t p = 0; p < H * W; ++p) out[(b * H * W + p) * S + s] = src[p] / T(255);
    }
  return out;
}

template <typename T>
typename EncoderNet<T>::Output EncoderNet<T>::forward(Tape<T>& tape, const Tensor<T>& obs) const {
  if (obs.rank() != 4) throw ShapeError("observation batch must be [B,S,H,W], got " + shape_string(obs.shape()));
  if (obs.extent(1) != spec_.stack || obs.extent(2) != spec_.height || obs.extent(3) != spec_.width)
    throw ShapeError("observation shape " + shape_string(obs.shape()) + " does not match encoder input");
  return forward_prepared(tape, tape.constant(prepare_observation(obs)));
}

template <typename T>
typename EncoderNet<T>::Output EncoderNet<T>::forward_prepared(Tape<T>& tape, const Var<T>& input) const {
  Output out;
  ParamCursor<T> cur(tape, params_, out.params);
  const bool norm = spec_.norm == NormKind::layer_norm;
  Var<T> x = input;
  if (spec_.variant == Variant::resnet15) {
    for (std::size_t s = 0; s < 3; ++s) {
      x = conv_norm(cur, x, 1, norm);
      x = nn::max_pool2d(x, {3, 3}, {2, 2});
      for (int r = 0; r < 2; ++r) {
        Var<T> h = activate(x, Activation::relu);
        h = conv_norm(cur, h, 1, norm);
        h = activate(h, Activation::relu);
        h = conv_norm(cur, h, 1, norm);
        x = add(x, h);
      }
      out.trace.push_back(x.shape());
      out.probes.push_back(x);
    }
    x = activate(x, Activation::relu);
  } else {
    const auto plan = conv_plan(spec_);
    // Probes: first stage, then the last stage of each duplicated group.
    const std::size_t copies = (plan.size() - 3) / 2;
    const std::size_t probe_at[] = {0, 1 + copies, plan.size() - 1};
    for (std::size_t i = 0; i < plan.size(); ++i) {
      const ConvStage& st = plan[i];
      Var<T> a = activate(conv_norm(cur, x, st.conv_stride, norm), spec_.activation);
      if (st.hadamard) {
        Var<T> b = activate(conv_norm(cur, x, st.conv_stride, norm), spec_.activation);
        a = mul(a, b);
      }
      if (st.pool_window) a = nn::max_pool2d(a, {st.pool_window, st.pool_window}, {st.pool_stride, st.pool_stride});
      x = a;
      out.trace.push_back(x.shape());
      if (std::find(std::begin(probe_at), std::end(probe_at), i) != std::end(probe_at)) out.probes.push_back(x);
    }
  }
  const Shape& fs = x.shape();
  std::size_t flat = 1;
  for (std::size_t d = 1; d < fs.size(); ++d) flat *= fs[d];
  x = reshape(x, {fs[0], flat});
  {
    Var<T> k = cur.next();
    Var<T> b = cur.next();
    x = nn::dense(x, k, b);
    if (norm) {
      Var<T> g = cur.next();
      Var<T> o = cur.next();
      x = nn::layer_norm(x, g, o, T(1e-5));
    }
    x = activate(x, spec_.variant == Variant::resnet15 ? Activation::relu : spec_.activation);
  }
  Var<T> hidden = x;
  Var<T> k = cur.next();
  Var<T> b = cur.next();
  out.q = nn::dense(x, k, b);
  if (out.params.size() != params_.size()) throw std::logic_error("encoder forward consumed wrong parameter count");
  out.probes.push_back(hidden);
  return out;
}

template <typename T>
Tensor<T> EncoderNet<T>::q_values(const Tensor<T>& obs) const {
  Tape<T> tape;
  tape.set_grad_enabled(false);
  return forward(tape, obs).q.value();
}

// ---- checkpoints -------------------------------------------------------------

namespace {
constexpr const char* kCheckpointMagic = "HDXCKPT 1";
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const EncoderNet<T>& net,
                     const std::map<std::string, std::string>& extra) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  out << kCheckpointMagic << '\n';
  for (const auto& [k, v] : net.spec().to_manifest()) out << k << '=' << v << '\n';
  for (const auto& [k, v] : extra) out << k << '=' << v << '\n';
  out << "tensors=" << net.parameters().size() << "\n\n";
  for (const auto& p : net.parameters()) write_tensor(out, p.value);
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

template <typename T>
EncoderNet<T> load_checkpoint(const std::filesystem::path& path, const std::optional<EncoderSpec>& expected,
                              std::map<std::string, std::string>* manifest) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) throw FormatError("not a checkpoint: " + path.string());
  std::map<std::string, std::string> kv;
  while (std::getline(in, line) && !line.empty()) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed manifest line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const EncoderSpec spec = EncoderSpec::from_manifest(kv);
  if (expected && !(*expected == spec)) throw FormatError("checkpoint spec does not match the requested encoder");
  EncoderNet<T> net(spec, 0);
  const std::size_t count = parse_count("tensors", need(kv, "tensors"));
  if (count != net.parameters().size())
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, encoder needs " +
                      std::to_string(net.parameters().size()));
  for (auto& p : net.parameters()) {
    Tensor<T> t = read_tensor<T>(in);
    if (t.shape() != p.value.shape())
      throw FormatError("tensor " + p.name + " has shape " + shape_string(t.shape()) + ", expected " +
                        shape_string(p.value.shape()));
    p.value = std::move(t);
  }
  if (manifest) *manifest = std::move(kv);
  return net;
}

template class EncoderNet<float>;
template class EncoderNet<double>;
template Tensor<float> prepare_observation(const Tensor<float>&);
template Tensor<double> prepare_observation(const Tensor<double>&);
template void save_checkpoint(const std::filesystem::path&, const EncoderNet<float>&,
                              const std::map<std::string, std::string>&);
template void save_checkpoint(const std::filesystem::path&, const EncoderNet<double>&,
                              const std::map<std::string, std::string>&);
template EncoderNet<float> load_checkpoint(const std::filesystem::path&, const std::optional<EncoderSpec>&,
                                           std::map<std::string, std::string>*);
template EncoderNet<double> load_checkpoint(const std::filesystem::path&, const std::optional<EncoderSpec>&,
                                            std::map<std::string, std::string>*);

}  // namespace hadamax
