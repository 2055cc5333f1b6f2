#include "grasp/contract.hpp"

#include <algorithm>
#include <string>

namespace grasp {

namespace {
constexpr double kMinPrefixNorm = 1e-12;
}

InterfaceContract InterfaceContract::ratio(int dim) {
  if (dim <= 0 || dim % 16 != 0) {
    throw Error(ErrorCode::kInvalidContract,
                "ratio ladder needs D divisible by 16, got " + std::to_string(dim));
  }
  InterfaceContract c;
  c.dim = dim;
  c.prefixes = {dim / 16, dim / 8, dim / 4, dim / 2, dim};
  c.views = {ViewLevel::kG0, ViewLevel::kG1, ViewLevel::kG2, ViewLevel::kG3, ViewLevel::kG3};
  c.kappa = {dim / 16, dim / 8, dim / 4, dim / 4, dim / 4, dim / 2};
  return c;
}

void InterfaceContract::validate() const {
  if (prefixes.empty()) throw Error(ErrorCode::kInvalidContract, "prefix set is empty");
  if (views.size() != prefixes.size()) {
    throw Error(ErrorCode::kInvalidContract, "one view assignment per prefix is required");
  }
  for (std::size_t i = 0; i < prefixes.size(); ++i) {
    if (prefixes[i] <= 0) throw Error(ErrorCode::kInvalidContract, "prefixes must be positive");
    if (i > 0 && prefixes[i] <= prefixes[i - 1]) {
      throw Error(ErrorCode::kInvalidContract, "prefixes must be strictly increasing");
    }
  }
  if (prefixes.back() != dim) throw Error(ErrorCode::kInvalidContract, "last prefix must equal D");
  for (NegType t : kAllNegTypes) {
    if (position(kappa_of(t)) < 0) {
      throw Error(ErrorCode::kInvalidContract, "kappa(" + std::string(to_string(t)) + ")=" +
                                                   std::to_string(kappa_of(t)) + " is not a prefix");
    }
  }
}

int InterfaceContract::position(int prefix) const {
  auto it = std::find(prefixes.begin(), prefixes.end(), prefix);
  return it == prefixes.end() ? -1 : static_cast<int>(it - prefixes.begin());
}

std::optional<int> InterfaceContract::assigned_prefix(ViewLevel v) const {
  for (std::size_t i = 0; i < prefixes.size(); ++i) {
    if (views[i] == v) return prefixes[i];
  }
  return std::nullopt;
}

InterfaceContract InterfaceContract::with_kappa(NegType t, int prefix) const {
  InterfaceContract c = *this;
  c.kappa[index(t)] = prefix;
  return c;
}

InterfaceContract InterfaceContract::with_uniform_view(ViewLevel v) const {
  InterfaceContract c = *this;
  std::fill(c.views.begin(), c.views.end(), v);
  return c;
}

Vector prefix_normalize(const Eigen::Ref<const Vector>& z, int k) {
  if (k <= 0 || k > z.size()) throw Error(ErrorCode::kDimMismatch, "prefix length out of range");
  const double norm = z.head(k).norm();
  if (norm < kMinPrefixNorm) throw Error(ErrorCode::kZeroPrefix, "prefix norm below 1e-12");
  return z.head(k) / norm;
}

double prefix_score(const Eigen::Ref<const Vector>& z_img, const Eigen::Ref<const Vector>& z_txt, int k,
                    double tau) {
  if (z_img.size() != z_txt.size()) throw Error(ErrorCode::kDimMismatch, "vector sizes differ");
  return prefix_normalize(z_img, k).dot(prefix_normalize(z_txt, k)) / tau;
}

Matrix prefix_rows(const Matrix& z, int k) {
  if (k <= 0 || k > z.cols()) throw Error(ErrorCode::kDimMismatch, "prefix length out of range");
  Matrix p = z.leftCols(k);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double norm = p.row(i).norm();
    if (norm < kMinPrefixNorm) throw Error(ErrorCode::kZeroPrefix, "row " + std::to_string(i) + " prefix norm below 1e-12");
    p.row(i) /= norm;
  }
  return p;
}

}  // namespace grasp
