#include <gtest/gtest.h>

#include <cmath>
#include <bit>
#include <filesystem>

#include "hadamax/encoders.hpp"
#include "hadamax/runs.hpp"

using namespace hadamax;
namespace fs = std::filesystem;

namespace {

// Parameters of one conv + layer norm pair.
std::size_t conv_norm(std::size_t k, std::size_t cin, std::size_t cout) { return k * k * cin * cout + cout + 2 * cout; }

std::size_t head(std::size_t flat, std::size_t actions) {
  return flat * 512 + 512 + 2 * 512 + 512 * actions + actions;
}

std::size_t flatten_width(const EncoderNet<float>& net) {
  Tape<float> tape;
  tape.set_grad_enabled(false);
  const auto& s = net.spec();
  const auto out = net.forward(tape, Tensor<float>::create({1, s.stack, s.height, s.width}));
  const Shape& last = out.trace.back();
  return last[1] * last[2] * last[3];
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("hdx_enc_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Encoders, HadamaxFlattenWidths) {
  EXPECT_EQ(flatten_width(EncoderNet<float>(EncoderSpec::hadamax(6, 64, 64), 0)), 4096u);
  EXPECT_EQ(flatten_width(EncoderNet<float>(EncoderSpec::hadamax(6, 84, 84), 0)), 7744u);
  EXPECT_EQ(flatten_width(EncoderNet<float>(EncoderSpec::nature(6, 84, 84), 0)), 7744u);
}

TEST(Encoders, HadamaxStageShapes) {
  EncoderNet<float> net(EncoderSpec::hadamax(4), 1);
  Tape<float> tape;
  const auto out = net.forward(tape, Tensor<float>::create({2, 4, 64, 64}));
  ASSERT_EQ(out.trace.size(), 3u);
  EXPECT_EQ(out.trace[0], (Shape{2, 16, 16, 32}));
  EXPECT_EQ(out.trace[1], (Shape{2, 8, 8, 64}));
  EXPECT_EQ(out.trace[2], (Shape{2, 8, 8, 64}));
  EXPECT_EQ(out.q.shape(), (Shape{2, 4}));
  ASSERT_EQ(out.probes.size(), 4u);
  EXPECT_EQ(out.probes[3].shape(), (Shape{2, 512}));
}

TEST(Encoders, ParameterCountsByArithmetic) {
  const std::size_t hadamax_convs = 2 * conv_norm(8, 4, 32) + 2 * conv_norm(4, 32, 64) + 2 * conv_norm(3, 64, 64);
  const std::size_t nature_convs = conv_norm(8, 4, 32) + conv_norm(4, 32, 64) + conv_norm(3, 64, 64);
  EXPECT_EQ(EncoderNet<float>(EncoderSpec::hadamax(6, 64, 64), 0).param_count(), hadamax_convs + head(4096, 6));
  EXPECT_EQ(EncoderNet<float>(EncoderSpec::hadamax(6, 84, 84), 0).param_count(), hadamax_convs + head(7744, 6));
  EXPECT_EQ(EncoderNet<float>(EncoderSpec::nature(6, 64, 64), 0).param_count(), nature_convs + head(4096, 6));
  // literal totals, worked by hand
  EXPECT_EQ(EncoderNet<float>(EncoderSpec::hadamax(6, 64, 64), 0).param_count(), 2258374u);
  EXPECT_EQ(EncoderNet<float>(EncoderSpec::nature(6, 84, 84), 0).param_count(), 4047846u);

  const std::size_t resnet = conv_norm(3, 4, 16) + 4 * conv_norm(3, 16, 16) + conv_norm(3, 16, 32) +
                             4 * conv_norm(3, 32, 32) + conv_norm(3, 32, 32) + 4 * conv_norm(3, 32, 32);
  EXPECT_EQ(EncoderNet<float>(EncoderSpec::resnet15(6, 64, 64), 0).param_count(), resnet + head(2048, 6));
  EXPECT_EQ(EncoderNet<float>(EncoderSpec::resnet15(6, 64, 64), 0).param_count(), 1151734u);
}

TEST(Encoders, FullyAblatedHadamaxEqualsNature) {
  for (std::size_t res : {64u, 84u}) {
    EncoderSpec s = EncoderSpec::hadamax(5, res, res);
    s.use_maxpool = false;
    s.use_hadamard = false;
    s.activation = Activation::relu;
    EXPECT_EQ(EncoderNet<float>(s, 0).param_count(), EncoderNet<float>(EncoderSpec::nature(5, res, res), 0).param_count());
  }
}

TEST(Encoders, NoPoolRestoresNatureStrides) {
  EncoderSpec s = EncoderSpec::hadamax(3);
  s.use_maxpool = false;
  const auto plan = conv_plan(s);
  ASSERT_EQ(plan.size(), 3u);
  EXPECT_EQ(plan[0].conv_stride, 4u);
  EXPECT_EQ(plan[1].conv_stride, 2u);
  EXPECT_EQ(plan[2].conv_stride, 1u);
  for (const auto& st : plan) EXPECT_EQ(st.pool_window, 0u);
  for (const auto& st : conv_plan(EncoderSpec::hadamax(3))) EXPECT_EQ(st.conv_stride, 1u);
}

TEST(Encoders, DeepVariantsAddStages) {
  EncoderSpec s = EncoderSpec::hadamax(3);
  s.variant = Variant::hadamax_deep5;
  EXPECT_EQ(conv_plan(s).size(), 5u);
  s.variant = Variant::hadamax_deep7;
  EXPECT_EQ(conv_plan(s).size(), 7u);
  EncoderNet<float> net(s, 0);
  Tape<float> tape;
  const auto out = net.forward(tape, Tensor<float>::create({1, 4, 64, 64}));
  EXPECT_EQ(out.trace.size(), 7u);
  EXPECT_EQ(out.probes.size(), 4u);
  EXPECT_EQ(out.trace.back(), (Shape{1, 8, 8, 64}));
}

TEST(Encoders, ResnetForwardShape) {
  EncoderNet<float> net(EncoderSpec::resnet15(7), 2);
  Tape<float> tape;
  const auto out = net.forward(tape, Tensor<float>::create({2, 4, 64, 64}, fill::Constant{100.0}));
  EXPECT_EQ(out.q.shape(), (Shape{2, 7}));
  EXPECT_EQ(out.trace.back(), (Shape{2, 8, 8, 32}));
}

TEST(Encoders, SpecValidation) {
  EncoderSpec s = EncoderSpec::nature(3);
  s.use_hadamard = true;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = EncoderSpec::hadamax(0);
  EXPECT_THROW(s.validate(), std::invalid_argument);
  EXPECT_THROW(parse_variant("impala"), std::invalid_argument);
  EXPECT_EQ(parse_variant(to_string(Variant::hadamax_deep7)), Variant::hadamax_deep7);
}

TEST(Encoders, ManifestRoundTrip) {
  EncoderSpec s = EncoderSpec::hadamax(9, 84, 84);
  s.use_hadamard = false;
  s.hidden_width = 256;
  EXPECT_EQ(EncoderSpec::from_manifest(s.to_manifest()), s);
}

TEST(Encoders, SeedDeterminesWeights) {
  EncoderNet<float> a(EncoderSpec::hadamax(3, 16, 16), 11), b(EncoderSpec::hadamax(3, 16, 16), 11),
      c(EncoderSpec::hadamax(3, 16, 16), 12);
  for (std::size_t i = 0; i < a.parameters().size(); ++i) EXPECT_EQ(a.parameters()[i].value, b.parameters()[i].value);
  EXPECT_NE(a.parameters()[0].value, c.parameters()[0].value);
}

TEST(Encoders, ObservationScalingAndLayout) {
  Tensor<float> obs({1, 4, 2, 2});
  for (std::size_t i = 0; i < obs.size(); ++i) obs[i] = static_cast<float>(i * 10);
  const auto p = prepare_observation(obs);
  EXPECT_EQ(p.shape(), (Shape{1, 2, 2, 4}));
  // [b, y, x, s] = obs[b, s, y, x] / 255
  EXPECT_FLOAT_EQ(p[(0 * 2 + 1) * 4 + 2], obs[2 * 4 + 0 * 2 + 1] / 255.0f);
  EXPECT_THROW(EncoderNet<float>(EncoderSpec::hadamax(3, 16, 16), 0).q_values(Tensor<float>::create({1, 4, 8, 8})),
               ShapeError);
}

TEST(Encoders, CheckpointRoundTripIsBitwise) {
  const auto dir = scratch("ckpt");
  EncoderNet<float> net(EncoderSpec::hadamax(3, 16, 16), 21);
  save_checkpoint(dir / "a.ckpt", net, {{"note", "x"}});
  std::map<std::string, std::string> manifest;
  const auto back = load_checkpoint<float>(dir / "a.ckpt", net.spec(), &manifest);
  EXPECT_EQ(manifest.at("note"), "x");
  const auto probe = Tensor<float>::create({8, 4, 16, 16}, fill::Gaussian{128.0, 60.0, 3});
  const auto q0 = net.q_values(probe), q1 = back.q_values(probe);
  ASSERT_EQ(q0.size(), q1.size());
  for (std::size_t i = 0; i < q0.size(); ++i)
    EXPECT_EQ(std::bit_cast<std::uint32_t>(q0[i]), std::bit_cast<std::uint32_t>(q1[i]));

  EXPECT_THROW(load_checkpoint<float>(dir / "a.ckpt", EncoderSpec::nature(3, 16, 16)), FormatError);
  EXPECT_THROW(load_checkpoint<float>(dir / "missing.ckpt"), std::runtime_error);
  fs::resize_file(dir / "a.ckpt", fs::file_size(dir / "a.ckpt") - 5);
  EXPECT_THROW(load_checkpoint<float>(dir / "a.ckpt"), FormatError);
}

TEST(Encoders, DescribeShowsStrides) {
  EncoderSpec s = EncoderSpec::hadamax(3);
  s.use_maxpool = false;
  const std::string d = runs::describe(s);
  EXPECT_NE(d.find("conv 8x8/4"), std::string::npos) << d;
  EXPECT_NE(d.find("conv 4x4/2"), std::string::npos) << d;
  EXPECT_EQ(d.find("maxpool"), std::string::npos) << d;
  const std::string full = runs::describe(EncoderSpec::hadamax(3));
  EXPECT_NE(full.find("conv 8x8/1 32 x2 hadamard, gelu, ln, maxpool 4/4"), std::string::npos) << full;
}
