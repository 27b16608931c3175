#include "wordrec/pair_model.hpp"

#include "wordrec/error.hpp"
#include "wordrec/text.hpp"

#include <cmath>
#include <stdexcept>

namespace wordrec {
namespace {

Matrix derive_conditional(const Matrix& joint) {
  const Eigen::Index n = joint.rows();
  const Eigen::Index eps = n - 1;
  Matrix cond = joint;
  for (Eigen::Index x = 0; x < n; ++x) {
    const double z = joint.row(x).sum();
    if (z > 0) {
      cond.row(x) /= z;
    } else {
      const Eigen::Index permitted = x == eps ? n - 1 : n;
      cond.row(x).setConstant(1.0 / static_cast<double>(permitted));
      if (x == eps) cond(eps, eps) = 0.0;
    }
  }
  return cond;
}

}  // namespace

PairModel::PairModel(Matrix joint) : joint_(std::move(joint)) {
  if (joint_.rows() != joint_.cols() || joint_.rows() < 1)
    throw std::invalid_argument("PairModel: joint table must be square");
  if ((joint_.array() < 0).any() || !joint_.allFinite())
    throw std::invalid_argument("PairModel: joint probabilities must be finite and non-negative");
  const Eigen::Index eps = joint_.rows() - 1;
  if (joint_(eps, eps) != 0.0) throw std::invalid_argument("PairModel: eps->eps must have zero mass");
  if (std::abs(joint_.sum() - 1.0) > 1e-9) throw std::invalid_argument("PairModel: joint table must sum to 1");
  conditional_ = derive_conditional(joint_);
}

PairModel PairModel::uniform(std::size_t symbols) {
  const auto n = static_cast<Eigen::Index>(symbols + 1);
  Matrix j = Matrix::Constant(n, n, 1.0 / static_cast<double>(n * n - 1));
  j(n - 1, n - 1) = 0.0;
  return PairModel(std::move(j));
}

PairModel PairModel::from_conditional(const Matrix& conditional, const Vector& input_mass) {
  if (conditional.rows() != input_mass.size()) throw std::invalid_argument("PairModel: size mismatch");
  Matrix j = input_mass.asDiagonal() * conditional;
  const double z = j.sum();
  if (z <= 0) throw std::invalid_argument("PairModel: no mass");
  j /= z;
  return PairModel(std::move(j));
}

std::string PairModel::serialize(const PhonemeInventory& inv) const {
  if (symbols() != inv.size()) throw std::invalid_argument("PairModel: inventory size mismatch");
  std::string out;
  for (Eigen::Index x = 0; x < joint_.rows(); ++x)
    for (Eigen::Index y = 0; y < joint_.cols(); ++y)
      if (joint_(x, y) != 0.0)
        out += inv.symbol(static_cast<int>(x)) + '\t' + inv.symbol(static_cast<int>(y)) + '\t' +
               format_double(joint_(x, y)) + '\n';
  return out;
}

PairModel PairModel::parse(std::string_view text, const PhonemeInventory& inv) {
  const auto n = static_cast<Eigen::Index>(inv.size() + 1);
  Matrix j = Matrix::Zero(n, n);
  auto id = [&](const std::string& s, std::size_t lineno) -> int {
    if (s == kEpsilonSymbol) return inv.epsilon();
    auto v = inv.find(s);
    if (!v) throw ValidationError("pair model line " + std::to_string(lineno) + ": unknown symbol '" + s + "'");
    return *v;
  };
  std::size_t lineno = 0;
  for (const auto& raw : split_on(text, '\n')) {
    ++lineno;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto f = split_on(line, '\t');
    if (f.size() != 3) throw ValidationError("pair model line " + std::to_string(lineno) + ": expected 3 fields");
    double p = 0;
    try {
      std::size_t used = 0;
      p = std::stod(f[2], &used);
      if (used != f[2].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ValidationError("pair model line " + std::to_string(lineno) + ": bad probability '" + f[2] + "'");
    }
    j(id(f[0], lineno), id(f[1], lineno)) = p;
  }
  try {
    return PairModel(std::move(j));
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
}

PairModel PairModel::load(const std::string& path, const PhonemeInventory& inv) {
  return parse(read_file(path), inv);
}

ArcCosts ArcCosts::from_pair_model(const PairModel& pm) {
  ArcCosts c;
  c.cost = pm.conditional().unaryExpr([](double p) { return p > 0 ? -std::log(p) : kInf; });
  c.cost(pm.epsilon(), pm.epsilon()) = kInf;
  return c;
}

ArcCosts ArcCosts::unit_edit(std::size_t symbols) {
  const auto n = static_cast<Eigen::Index>(symbols + 1);
  ArcCosts c;
  c.cost = Matrix::Ones(n, n);
  c.cost.diagonal().head(n - 1).setZero();
  c.cost(n - 1, n - 1) = kInf;
  return c;
}

}  // namespace wordrec
