#pragma once

#include "wordrec/pair_model.hpp"
#include "wordrec/phon.hpp"

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace testsupport {

using wordrec::Matrix;
using wordrec::PairModel;
using wordrec::PhonemeInventory;
using wordrec::PhonemeString;

inline PhonemeInventory toy_inventory() {
  return PhonemeInventory({{"p", false}, {"b", false}, {"t", false},  {"d", false}, {"k", false},
                           {"g", false}, {"m", false}, {"n", false},  {"s", false}, {"l", false},
                           {"ɹ", false}, {"w", false}, {"f", false},  {"a", true},  {"æ", true},
                           {"ə", true},  {"i", true},  {"ɛ", true},   {"oʊ", true}, {"u", true}});
}

inline PhonemeString ph(const std::string& text, const PhonemeInventory& inv) {
  return wordrec::parse_phonemes(text, inv);
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("wordrec-" + tag + "-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline PhonemeString random_string(std::size_t symbols, std::size_t min_len, std::size_t max_len, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  std::uniform_int_distribution<int> sym(0, static_cast<int>(symbols) - 1);
  PhonemeString s;
  const auto n = len(rng);
  for (std::size_t i = 0; i < n; ++i) s.syms.push_back(sym(rng));
  return s;
}

/// Random joint table; with `sparsity` > 0 some events get exactly zero mass.
inline PairModel random_pair_model(std::size_t symbols, std::mt19937_64& rng, double sparsity = 0.0) {
  const auto n = static_cast<Eigen::Index>(symbols + 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix j = Matrix::Zero(n, n);
  for (Eigen::Index x = 0; x < n; ++x)
    for (Eigen::Index y = 0; y < n; ++y) {
      if (x == n - 1 && y == n - 1) continue;
      if (u(rng) < sparsity) continue;
      j(x, y) = 0.05 + u(rng);
    }
  if (j.sum() == 0) j(0, 0) = 1.0;
  return PairModel(j / j.sum());
}

/// Total probability of all monotone alignments, by explicit recursion over
/// every path of the edit lattice. `cond` is indexed (input, output) with the
/// last row/column standing for epsilon.
inline double enumerate_alignments(const Matrix& cond, const PhonemeString& a, const PhonemeString& b, std::size_t i = 0,
                                   std::size_t j = 0) {
  const auto eps = cond.rows() - 1;
  if (i == a.size() && j == b.size()) return 1.0;
  double total = 0.0;
  if (i < a.size() && j < b.size()) total += cond(a[i], b[j]) * enumerate_alignments(cond, a, b, i + 1, j + 1);
  if (i < a.size()) total += cond(a[i], eps) * enumerate_alignments(cond, a, b, i + 1, j);
  if (j < b.size()) total += cond(eps, b[j]) * enumerate_alignments(cond, a, b, i, j + 1);
  return total;
}

inline double brute_theta(const PairModel& pm, const PhonemeString& a, const PhonemeString& b) {
  const double p = enumerate_alignments(pm.conditional(), a, b);
  return p > 0 ? -std::log(p) : std::numeric_limits<double>::infinity();
}

/// Every string over `symbols` of length 0..max_len.
inline std::vector<PhonemeString> all_strings(std::size_t symbols, std::size_t max_len) {
  std::vector<PhonemeString> out{PhonemeString{}};
  std::vector<PhonemeString> frontier{PhonemeString{}};
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::vector<PhonemeString> next;
    for (const auto& s : frontier)
      for (std::size_t c = 0; c < symbols; ++c) {
        auto t = s;
        t.syms.push_back(static_cast<int>(c));
        next.push_back(t);
      }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

}  // namespace testsupport
