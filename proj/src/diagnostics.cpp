#include "hadamax/diagnostics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string_view>

#include <Eigen/SVD>

namespace hadamax::diag {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

double parse_number(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(where + ": not a number: '" + s + "'");
  }
}

}  // namespace

std::vector<double> singular_values(const Tensor<double>& phi) {
  if (phi.rank() != 2) throw ShapeError("singular_values expects a matrix, got " + shape_string(phi.shape()));
  for (double v : phi.data())
    if (!std::isfinite(v)) throw std::domain_error("singular_values: non-finite entry");
  if (phi.size() == 0) return std::vector<double>(std::min(phi.extent(0), phi.extent(1)), 0.0);
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMajor> m(phi.raw(), static_cast<Eigen::Index>(phi.extent(0)),
                                     static_cast<Eigen::Index>(phi.extent(1)));
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m);  // values only; Eigen returns them sorted descending
  const auto& sv = svd.singularValues();
  return std::vector<double>(sv.data(), sv.data() + sv.size());
}

std::size_t effective_rank(std::span<const double> sv, double delta) {
  const double total = std::accumulate(sv.begin(), sv.end(), 0.0);
  if (total <= 0.0) return 0;
  double running = 0.0;
  for (std::size_t k = 0; k < sv.size(); ++k) {
    running += sv[k];
    if (running / total >= 1.0 - delta) return k + 1;
  }
  return sv.size();
}

std::size_t effective_rank(const Tensor<double>& phi, double delta) {
  const auto sv = singular_values(phi);
  return effective_rank(sv, delta);
}

double dead_neuron_fraction(const Tensor<double>& phi, double threshold) {
  if (phi.rank() != 2) throw ShapeError("dead_neuron_fraction expects a matrix, got " + shape_string(phi.shape()));
  const std::size_t rows = phi.extent(0), cols = phi.extent(1);
  if (rows < 2) throw std::invalid_argument("dead_neuron_fraction needs at least two rows");
  if (cols == 0) return 0.0;
  std::vector<double> mean(cols, 0.0), m2(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)  // Welford, column-parallel
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = phi[r * cols + c];
      const double d = v - mean[c];
      mean[c] += d / static_cast<double>(r + 1);
      m2[c] += d * (v - mean[c]);
    }
  std::size_t dead = 0;
  for (std::size_t c = 0; c < cols; ++c)
    if (m2[c] / static_cast<double>(rows - 1) < threshold) ++dead;
  return static_cast<double>(dead) / static_cast<double>(cols);
}

Tensor<double> feature_matrix(const Tensor<float>& batch) {
  if (batch.rank() < 2) throw ShapeError("feature batch must be [B, ...], got " + shape_string(batch.shape()));
  const std::size_t rows = batch.extent(0);
  return batch.cast<double>().reshaped({rows, batch.size() / rows});
}

// ---- score tables ------------------------------------------------------------

ScoreTable ScoreTable::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open score table " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument(path.string() + ": empty score table");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "game,raw,random,human")
    throw std::invalid_argument(path.string() + ": header must be 'game,raw,random,human'");
  ScoreTable t;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (cells.size() != 4) throw std::invalid_argument(where + ": expected 4 fields");
    ScoreRow r{cells[0], parse_number(cells[1], where), parse_number(cells[2], where), parse_number(cells[3], where)};
    if (r.human == r.random) throw std::invalid_argument(where + ": human and random scores are equal");
    t.rows.push_back(std::move(r));
  }
  return t;
}

void ScoreTable::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "game,raw,random,human\n";
  out.precision(17);
  for (const auto& r : rows) out << r.game << ',' << r.raw << ',' << r.random << ',' << r.human << '\n';
}

ScoreTable ScoreTable::averaged() const {
  ScoreTable out;
  std::map<std::string, std::size_t> slot;
  std::vector<std::size_t> count;
  for (const auto& r : rows) {
    const std::string key = canonical_game(r.game);
    auto it = slot.find(key);
    if (it == slot.end()) {
      slot.emplace(key, out.rows.size());
      out.rows.push_back(r);
      count.push_back(1);
      continue;
    }
    ScoreRow& acc = out.rows[it->second];
    if (acc.random != r.random || acc.human != r.human)
      throw std::invalid_argument("game " + r.game + " has inconsistent baselines across seeds");
    acc.raw += r.raw;
    ++count[it->second];
  }
  for (std::size_t i = 0; i < out.rows.size(); ++i) out.rows[i].raw /= static_cast<double>(count[i]);
  return out;
}

double hns(double x, double r, double h) {
  if (h == r) throw std::invalid_argument("human and random scores are equal");
  return (x - r) / (h - r);
}

std::vector<double> normalized_scores(const ScoreTable& table) {
  std::vector<double> z;
  for (const auto& r : table.averaged().rows) z.push_back(hns(r.raw, r.random, r.human));
  return z;
}

double median_hns(const ScoreTable& table) {
  auto z = normalized_scores(table);
  if (z.empty()) throw std::invalid_argument("median_hns of an empty table");
  std::sort(z.begin(), z.end());
  const std::size_t n = z.size();
  return n % 2 ? z[n / 2] : 0.5 * (z[n / 2 - 1] + z[n / 2]);
}

std::vector<double> score_profile(const ScoreTable& table, std::span<const double> taus) {
  const auto z = normalized_scores(table);
  if (z.empty()) throw std::invalid_argument("score_profile of an empty table");
  std::vector<double> out;
  for (double tau : taus) {
    const auto above = std::count_if(z.begin(), z.end(), [tau](double v) { return v > tau; });
    out.push_back(static_cast<double>(above) / static_cast<double>(z.size()));
  }
  return out;
}

// ---- subset estimators -------------------------------------------------------

std::uint64_t coefficient_checksum(std::span<const double> coefficients) {
  std::string text;
  char buf[32];
  for (std::size_t i = 0; i < coefficients.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.4f", coefficients[i]);
    if (i) text += ',';
    text += buf;
  }
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

struct StoredSubset {
  SubsetWeights weights;
  std::uint64_t checksum;
};

StoredSubset make_atari3() {
  return {{{"Battle Zone", "Name This Game", "Phoenix"}, {0.3706, 0.5133, 0.1015}}, 0x10c52019dd89a8e0ULL};
}

StoredSubset make_atari10() {
  return {{{"Amidar", "Bowling", "Frostbite", "Kung Fu Master", "River Raid", "Battle Zone", "Double Dunk",
            "Name This Game", "Phoenix", "Q*Bert"},
           {0.0825, 0.0559, 0.0691, 0.0986, 0.0486, 0.1888, 0.0852, 0.1287, 0.1643, 0.0592}},
          0x1662c5e4d3d7e55aULL};
}

const SubsetWeights& verified(const StoredSubset& s) {
  if (coefficient_checksum(s.weights.coefficients) != s.checksum || s.weights.games.size() != s.weights.coefficients.size())
    throw std::logic_error("subset coefficients failed their checksum");
  return s.weights;
}

}  // namespace

const SubsetWeights& subset_weights(Subset subset) {
  static const StoredSubset a3 = make_atari3();
  static const StoredSubset a10 = make_atari10();
  static const SubsetWeights& w3 = verified(a3);
  static const SubsetWeights& w10 = verified(a10);
  return subset == Subset::atari3 ? w3 : w10;
}

std::string canonical_game(const std::string& name) {
  std::string_view in = name;
  if (in.starts_with("ALE/")) in.remove_prefix(4);
  std::string s;
  for (unsigned char c : in)
    if (std::isalnum(c)) s += static_cast<char>(std::tolower(c));
  for (const char* suffix : {"noframeskipv4", "v5", "v4", "v0"}) {
    const std::string suf(suffix);
    if (s.size() > suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0) {
      s.erase(s.size() - suf.size());
      break;
    }
  }
  return s;
}

double atari_subset_score(const ScoreTable& table, Subset subset) {
  const SubsetWeights& w = subset_weights(subset);
  const ScoreTable avg = table.averaged();
  std::map<std::string, const ScoreRow*> by_game;
  for (const auto& r : avg.rows) by_game[canonical_game(r.game)] = &r;
  if (by_game.size() != w.games.size())
    throw std::invalid_argument("subset score needs exactly " + std::to_string(w.games.size()) + " games, table has " +
                                std::to_string(by_game.size()));
  double f = 0.0;
  for (std::size_t i = 0; i < w.games.size(); ++i) {
    auto it = by_game.find(canonical_game(w.games[i]));
    if (it == by_game.end()) throw std::invalid_argument("missing game: " + w.games[i]);
    const double z = 100.0 * hns(it->second->raw, it->second->random, it->second->human);
    f += w.coefficients[i] * std::log10(1.0 + std::max(0.0, z));
  }
  return std::pow(10.0, f) - 1.0;
}

}  // namespace hadamax::diag
