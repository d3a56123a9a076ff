#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "hadamax/config.hpp"

using namespace hadamax;

namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, DefaultHyperparameters) {
  const RunConfig c;
  EXPECT_EQ(c.get("train.num_envs"), "128");
  EXPECT_EQ(c.get("train.num_steps"), "32");
  EXPECT_EQ(c.get("train.eps_start"), "1");
  EXPECT_EQ(c.get("train.eps_finish"), "0.001");
  EXPECT_EQ(c.get("train.eps_decay"), "0.1");
  EXPECT_EQ(c.get("train.num_epochs"), "2");
  EXPECT_EQ(c.get("train.num_minibatches"), "32");
  EXPECT_EQ(c.get("train.lr"), "0.00025");
  EXPECT_EQ(c.get("train.max_grad_norm"), "10");
  EXPECT_EQ(c.get("train.gamma"), "0.99");
  EXPECT_EQ(c.get("train.lambda"), "0.65");
  EXPECT_EQ(c.get("train.total_frames"), "300000");
  EXPECT_EQ(c.get("encoder.variant"), "hadamax");
  EXPECT_EQ(c.get("env.resolution"), "64");
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, DumpReparsesToTheSameConfig) {
  RunConfig c;
  c.apply("lr=3.3e-4");
  c.apply("encoder.variant=nature");
  c.apply("gamma=0.97");
  c.apply("run.out_dir=runs/x y");
  c.apply("num_envs=16");
  c.seed = 12345678901234ULL;
  const RunConfig back = RunConfig::parse(c.dump());
  EXPECT_EQ(back, c);
  EXPECT_EQ(back.dump(), c.dump());
}

TEST(Config, ParseAcceptsCommentsAndQuotes) {
  const auto c = RunConfig::parse(
      "# desk run\n"
      "env.name = \"grid_collect\"   # trailing comment\n"
      "\n"
      "train.num_envs = 16\n"
      "run.seed = 4\n");
  EXPECT_EQ(c.env, "grid_collect");
  EXPECT_EQ(c.train.num_envs, 16u);
  EXPECT_EQ(c.seed, 4u);
}

TEST(Config, RejectsUnknownKeysWithLocation) {
  const auto msg = error_of([] { RunConfig::parse("train.lr = 1e-3\ntrain.momentum = 0.9\n", "catch.cfg"); });
  EXPECT_NE(msg.find("catch.cfg:2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("train.momentum"), std::string::npos) << msg;
  EXPECT_NE(error_of([] { RunConfig::parse("lambda = 0.5\n"); }), "");  // files need full keys
  EXPECT_NE(error_of([] { RunConfig::parse("train.lr 0.1\n"); }), "");
}

TEST(Config, OverridesResolveSuffixes) {
  RunConfig c;
  c.apply("lambda=0.5");
  EXPECT_EQ(c.train.lambda, 0.5);
  c.apply(" seed = 9 ");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_THROW(c.apply("nonsense=1"), ConfigError);
  EXPECT_THROW(c.apply("lambda"), ConfigError);
  EXPECT_THROW(c.apply("num_envs=-3"), ConfigError);
  EXPECT_THROW(c.apply("use_maxpool=maybe"), ConfigError);
  EXPECT_THROW(c.apply("lr=abc"), ConfigError);
}

TEST(Config, ValidationNamesTheField) {
  RunConfig c;
  c.apply("lambda=1.5");
  EXPECT_NE(error_of([&] { c.validate(); }).find("lambda"), std::string::npos);
  c = {};
  c.apply("env.name=pong");
  EXPECT_NE(error_of([&] { c.validate(); }).find("env.name"), std::string::npos);
  c = {};
  c.apply("env.resolution=8");
  EXPECT_NE(error_of([&] { c.validate(); }).find("env.resolution"), std::string::npos);
  c = {};
  c.apply("encoder.variant=nature");
  c.apply("encoder.use_hadamard=true");
  EXPECT_NE(error_of([&] { c.validate(); }).find("use_hadamard"), std::string::npos);
}

TEST(Config, VariantResetsAblationFlags) {
  RunConfig c;
  c.apply("encoder.use_maxpool=false");
  c.apply("encoder.variant=nature");
  EXPECT_FALSE(c.encoder.use_hadamard);
  EXPECT_EQ(c.encoder.activation, Activation::relu);
  c.apply("encoder.variant=hadamax");
  EXPECT_TRUE(c.encoder.use_maxpool);
  EXPECT_TRUE(c.encoder.use_hadamard);
  EXPECT_EQ(c.encoder.activation, Activation::gelu);
}

TEST(Config, ShippedConfigsLoad) {
  const std::filesystem::path dir = HDX_SOURCE_DIR "/configs";
  ASSERT_TRUE(std::filesystem::is_directory(dir));
  std::size_t n = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".cfg") continue;
    const auto c = RunConfig::load(entry.path());
    EXPECT_NO_THROW(c.validate()) << entry.path();
    ++n;
  }
  EXPECT_GE(n, 2u);
  const auto catch_cfg = RunConfig::load(dir / "catch.cfg");
  EXPECT_EQ(catch_cfg.train.num_envs, 16u);
  EXPECT_EQ(catch_cfg.train.total_frames, 300000u);
}
