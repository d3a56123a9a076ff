#pragma once

// Representation diagnostics (effective rank, dead units) and the Atari score
// aggregates: median human-normalized score, score profile and the Atari-3 /
// Atari-10 subset estimators.

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hadamax/tensor.hpp"

namespace hadamax::diag {

/// Singular values of a [rows, cols] matrix in decreasing order, from a cyclic
/// Jacobi eigensolve of the smaller Gram matrix. Throws on non-finite input.
std::vector<double> singular_values(const Tensor<double>& phi);

/// Smallest k whose top-k singular values hold a (1 - delta) share of the sum;
/// 0 when every value is zero.
std::size_t effective_rank(std::span<const double> sorted_singular_values, double delta = 0.01);
std::size_t effective_rank(const Tensor<double>& phi, double delta = 0.01);

/// Share of columns whose unbiased variance over rows is below `threshold`.
double dead_neuron_fraction(const Tensor<double>& phi, double threshold = 1e-4);

/// Flattens a [B, ...] feature batch into [B, features].
Tensor<double> feature_matrix(const Tensor<float>& batch);

struct ScoreRow {
  std::string game;
  double raw = 0.0;
  double random = 0.0;
  double human = 0.0;
};

/// Rows of `game,raw,random,human`. Repeated game names are separate seeds.
struct ScoreTable {
  std::vector<ScoreRow> rows;

  static ScoreTable read_csv(const std::filesystem::path& path);
  void write_csv(const std::filesystem::path& path) const;
  /// One row per game with the raw score averaged over seeds, first-seen order.
  ScoreTable averaged() const;
};

/// (x - r) / (h - r); throws when h == r.
double hns(double x, double r, double h);

/// Per-game normalized scores after averaging seeds.
std::vector<double> normalized_scores(const ScoreTable& table);
double median_hns(const ScoreTable& table);

/// For each tau, the share of games with normalized score strictly above tau.
std::vector<double> score_profile(const ScoreTable& table, std::span<const double> taus);

enum class Subset { atari3, atari10 };

struct SubsetWeights {
  std::vector<std::string> games;
  std::vector<double> coefficients;
};

/// Embedded regression weights. Verified against a stored checksum on first use.
const SubsetWeights& subset_weights(Subset subset);
/// FNV-1a 64 over the coefficients printed with four decimals, comma separated.
std::uint64_t coefficient_checksum(std::span<const double> coefficients);

/// Lower-case alphanumerics without version suffixes: "BattleZone-v5" and
/// "Battle Zone" both map to "battlezone".
std::string canonical_game(const std::string& name);

/// 10^f - 1 with f = sum_i c_i log10(1 + max(0, 100 (x_i - r_i) / (h_i - r_i))).
/// The table must hold exactly the subset's games (seeds are averaged first).
double atari_subset_score(const ScoreTable& table, Subset subset);

}  // namespace hadamax::diag
