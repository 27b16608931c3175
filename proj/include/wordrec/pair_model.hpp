#pragma once

#include "wordrec/numeric.hpp"
#include "wordrec/phon.hpp"

#include <string>
#include <string_view>

namespace wordrec {

/// Joint unigram model over edit events x -> y, with x, y ranging over the
/// inventory plus epsilon (index `epsilon()`). The epsilon -> epsilon cell is
/// always zero. The conditional table normalizes each input row over all
/// outputs; a row with no joint mass is given the uniform distribution over
/// its permitted outputs.
class PairModel {
 public:
  PairModel() = default;
  /// Throws std::invalid_argument unless `joint` is square, non-negative,
  /// zero at (eps, eps) and sums to 1 within 1e-9.
  explicit PairModel(Matrix joint);

  /// Every permitted event equally likely.
  static PairModel uniform(std::size_t symbols);
  /// joint(x, y) = input_mass(x) * conditional(x, y). Rows of `conditional`
  /// must each sum to 1; the eps row's output column must be zero.
  static PairModel from_conditional(const Matrix& conditional, const Vector& input_mass);

  std::size_t symbols() const { return joint_.rows() == 0 ? 0 : static_cast<std::size_t>(joint_.rows() - 1); }
  int epsilon() const { return static_cast<int>(symbols()); }

  const Matrix& joint() const { return joint_; }
  const Matrix& conditional() const { return conditional_; }
  double joint(int x, int y) const { return joint_(x, y); }
  double conditional(int x, int y) const { return conditional_(x, y); }
  /// Total joint mass of insertion events.
  double insertion_mass() const { return joint_.row(epsilon()).sum(); }

  /// `input<TAB>output<TAB>joint` rows for every non-zero cell.
  std::string serialize(const PhonemeInventory& inv) const;
  static PairModel parse(std::string_view text, const PhonemeInventory& inv);
  static PairModel load(const std::string& path, const PhonemeInventory& inv);

  friend bool operator==(const PairModel& a, const PairModel& b) { return a.joint_ == b.joint_; }

 private:
  Matrix joint_;
  Matrix conditional_;
};

/// Negative log arc weights of an edit transducer, indexed like PairModel
/// tables. +inf marks a forbidden arc.
struct ArcCosts {
  Matrix cost;

  std::size_t symbols() const { return static_cast<std::size_t>(cost.rows() - 1); }
  int epsilon() const { return static_cast<int>(symbols()); }

  /// -log of the conditional table.
  static ArcCosts from_pair_model(const PairModel& pm);
  /// Identity arcs cost 0, every substitution, deletion and insertion costs 1.
  static ArcCosts unit_edit(std::size_t symbols);
};

}  // namespace wordrec
