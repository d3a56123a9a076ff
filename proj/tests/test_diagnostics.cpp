#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "hadamax/diagnostics.hpp"

using namespace hadamax;
using namespace hadamax::diag;

namespace {

Tensor<double> random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  return Tensor<double>::create({r, c}, fill::Gaussian{0.0, 1.0, seed});
}

double frobenius2(const Tensor<double>& m) {
  double s = 0.0;
  for (double v : m.data()) s += v * v;
  return s;
}

ScoreTable all_human(const std::vector<std::string>& games) {
  ScoreTable t;
  for (std::size_t i = 0; i < games.size(); ++i) {
    const double r = 10.0 * i - 3.0, h = r + 100.0 + i;
    t.rows.push_back({games[i], h, r, h});
  }
  return t;
}

}  // namespace

TEST(SingularValues, TwoByTwoMatchesCharacteristicPolynomial) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = random_matrix(2, 2, rng());
    const double a = m[0], b = m[1], c = m[2], d = m[3];
    // eigenvalues of M^T M solve s^2 - (a^2+b^2+c^2+d^2) s + (ad - bc)^2 = 0
    const double tr = a * a + b * b + c * c + d * d, det = (a * d - b * c) * (a * d - b * c);
    const double disc = std::sqrt(std::max(0.0, tr * tr - 4 * det));
    const double s1 = std::sqrt((tr + disc) / 2), s2 = std::sqrt(std::max(0.0, (tr - disc) / 2));
    const auto sv = singular_values(m);
    ASSERT_EQ(sv.size(), 2u);
    EXPECT_NEAR(sv[0], s1, 1e-10);
    EXPECT_NEAR(sv[1], s2, 1e-7);  // the small root loses digits in the closed form
  }
}

TEST(SingularValues, FrobeniusIdentityAndOrdering) {
  for (auto [r, c] : {std::pair{40, 7}, {7, 40}, {64, 64}, {1, 9}, {200, 33}}) {
    const auto m = random_matrix(r, c, r * 100 + c);
    const auto sv = singular_values(m);
    ASSERT_EQ(sv.size(), static_cast<std::size_t>(std::min(r, c)));
    double s2 = 0.0;
    for (std::size_t i = 0; i < sv.size(); ++i) {
      s2 += sv[i] * sv[i];
      if (i) EXPECT_GE(sv[i - 1], sv[i]);
      EXPECT_GE(sv[i], 0.0);
    }
    EXPECT_NEAR(s2, frobenius2(m), 1e-8 * frobenius2(m));
  }
}

TEST(SingularValues, KnownSpectra) {
  Tensor<double> d({3, 3}, {3, 0, 0, 0, -2, 0, 0, 0, 0.5});
  auto sv = singular_values(d);
  EXPECT_NEAR(sv[0], 3.0, 1e-12);
  EXPECT_NEAR(sv[1], 2.0, 1e-12);
  EXPECT_NEAR(sv[2], 0.5, 1e-12);
  // rank one: outer product u v^T has a single singular value |u||v|
  Tensor<double> outer({4, 3});
  const double u[] = {1, 2, 2, 0}, v[] = {3, 0, 4};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) outer[i * 3 + j] = u[i] * v[j];
  sv = singular_values(outer);
  EXPECT_NEAR(sv[0], 15.0, 1e-12);
  EXPECT_NEAR(sv[1], 0.0, 1e-12);
  EXPECT_THROW(singular_values(Tensor<double>({2, 1}, {1.0, std::nan("")})), std::domain_error);
}

TEST(EffectiveRank, Examples) {
  Tensor<double> eye({10, 10});
  for (std::size_t i = 0; i < 10; ++i) eye[i * 10 + i] = 1.0;
  EXPECT_EQ(effective_rank(eye, 0.01), 10u);
  const double sv[] = {3.0, 1.0};
  EXPECT_EQ(effective_rank(sv, 0.01), 2u);
  const double skew[] = {100.0, 0.5, 0.4};  // 100/100.9 clears 0.99
  EXPECT_EQ(effective_rank(skew, 0.01), 1u);
  EXPECT_EQ(effective_rank(Tensor<double>::create({5, 4}), 0.01), 0u);
}

TEST(DeadNeurons, Fraction) {
  EXPECT_EQ(dead_neuron_fraction(Tensor<double>::create({8, 6}, fill::Constant{0.7})), 1.0);
  auto m = random_matrix(50, 4, 3);
  EXPECT_EQ(dead_neuron_fraction(m), 0.0);
  for (std::size_t r = 0; r < 50; ++r) m[r * 4 + 2] = 1e-3 * static_cast<double>(r % 2);  // variance ~2.6e-7
  EXPECT_EQ(dead_neuron_fraction(m), 0.25);
  EXPECT_THROW(dead_neuron_fraction(random_matrix(1, 4, 3)), std::invalid_argument);
}

TEST(FeatureMatrix, FlattensTrailingAxes) {
  const auto b = Tensor<float>::create({3, 2, 2, 5}, fill::Constant{2.0});
  const auto m = feature_matrix(b);
  EXPECT_EQ(m.shape(), (Shape{3, 20}));
  EXPECT_EQ(m[7], 2.0);
}

TEST(Metrics, HumanNormalizedScore) {
  EXPECT_DOUBLE_EQ(hns(50, 0, 100), 0.5);
  EXPECT_DOUBLE_EQ(hns(-10, -10, 30), 0.0);
  EXPECT_THROW(hns(1, 2, 2), std::invalid_argument);
  const auto t = all_human({"Pong", "Breakout", "Seaquest", "Qbert"});
  EXPECT_EQ(median_hns(t), 1.0);
}

TEST(Metrics, MedianAveragesSeedsFirst) {
  ScoreTable t;
  t.rows = {{"Pong", 0, 0, 10}, {"PongNoFrameskip-v4", 10, 0, 10}, {"Breakout", 3, 0, 10}};
  // Pong averages to 0.5, Breakout 0.3 -> median of {0.3, 0.5}
  EXPECT_DOUBLE_EQ(median_hns(t), 0.4);
}

TEST(Metrics, ScoreProfileIsMonotone) {
  ScoreTable t;
  for (int i = 0; i < 20; ++i) t.rows.push_back({"g" + std::to_string(i), 0.37 * i * i, 0, 10});
  std::vector<double> taus;
  for (int i = 0; i <= 80; ++i) taus.push_back(0.1 * i);
  const auto p = score_profile(t, taus);
  for (std::size_t i = 1; i < p.size(); ++i) EXPECT_LE(p[i], p[i - 1]);
  EXPECT_DOUBLE_EQ(p[0], 19.0 / 20.0);  // strictly above zero
}

TEST(Metrics, PublishedCoefficientsAreChecksummed) {
  const auto& a3 = subset_weights(Subset::atari3);
  const auto& a10 = subset_weights(Subset::atari10);
  EXPECT_EQ(a3.coefficients, (std::vector<double>{0.3706, 0.5133, 0.1015}));
  EXPECT_EQ(a10.games.size(), 10u);
  EXPECT_EQ(coefficient_checksum(a10.coefficients), 0x1662c5e4d3d7e55aULL);
  std::vector<double> tampered = a10.coefficients;
  tampered[3] += 1e-4;
  EXPECT_NE(coefficient_checksum(tampered), 0x1662c5e4d3d7e55aULL);
}

TEST(Metrics, SubsetScoreAnchors) {
  const auto& a10 = subset_weights(Subset::atari10);
  ScoreTable zero;
  for (const auto& g : a10.games) zero.rows.push_back({g, 5.0, 5.0, 20.0});
  EXPECT_EQ(atari_subset_score(zero, Subset::atari10), 0.0);

  // every game at human level: 10^(sum_i c_i log10 101) - 1 = 101^(sum c) - 1
  const auto human = all_human(a10.games);
  double csum = 0.0;
  for (double c : a10.coefficients) csum += c;
  const double want = std::pow(101.0, csum) - 1.0;
  EXPECT_NEAR(want, 91.478, 1e-3);
  EXPECT_NEAR(atari_subset_score(human, Subset::atari10), want, 1e-6);

  const auto& a3 = subset_weights(Subset::atari3);
  EXPECT_NEAR(atari_subset_score(all_human(a3.games), Subset::atari3), std::pow(101.0, 0.9854) - 1.0, 1e-6);

  ScoreTable partial = human;
  partial.rows.pop_back();
  EXPECT_THROW(atari_subset_score(partial, Subset::atari10), std::invalid_argument);
}

TEST(Metrics, CanonicalNames) {
  EXPECT_EQ(canonical_game("Q*Bert"), "qbert");
  EXPECT_EQ(canonical_game("QbertNoFrameskip-v4"), "qbert");
  EXPECT_EQ(canonical_game("Name This Game"), "namethisgame");
  EXPECT_EQ(canonical_game("ALE/KungFuMaster-v5"), "kungfumaster");
}

TEST(Metrics, ScoreTableCsvRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "hdx_scores.csv";
  const auto t = all_human({"Amidar", "Bowling"});
  t.write_csv(path);
  const auto back = ScoreTable::read_csv(path);
  ASSERT_EQ(back.rows.size(), 2u);
  EXPECT_EQ(back.rows[1].game, "Bowling");
  EXPECT_EQ(back.rows[1].human, t.rows[1].human);
  std::ofstream(path) << "game,score\nx,1\n";
  EXPECT_THROW(ScoreTable::read_csv(path), std::invalid_argument);
  std::ofstream(path) << "game,raw,random,human\nx,1,2,2\n";
  EXPECT_THROW(ScoreTable::read_csv(path), std::invalid_argument);
}
