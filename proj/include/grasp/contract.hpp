#pragma once

#include "grasp/common.hpp"

#include <array>
#include <optional>
#include <vector>

namespace grasp {

/// Which prefix lengths exist, which text view each one is trained against,
/// and the earliest prefix at which each typed distinction must separate.
struct InterfaceContract {
  int dim = 0;
  std::vector<int> prefixes;           // strictly increasing, last == dim
  std::vector<ViewLevel> views;        // one per prefix
  std::array<int, kNumNegTypes> kappa{};  // boundary prefix per NegType

  /// The ratio ladder {D/16, D/8, D/4, D/2, D} -> {G0, G1, G2, G3, G3} with
  /// kappa object D/16, attribute D/8, relation/action/order D/4, full D/2.
  /// Requires D divisible by 16.
  static InterfaceContract ratio(int dim);

  /// Throws kInvalidContract when an invariant fails.
  void validate() const;

  std::size_t size() const { return prefixes.size(); }
  int kappa_of(NegType t) const { return kappa[index(t)]; }
  /// Position of a prefix length in `prefixes`, or -1.
  int position(int prefix) const;
  /// First prefix assigned to a view (the staircase cell), if any.
  std::optional<int> assigned_prefix(ViewLevel v) const;

  /// Shifted boundaries for the kappa-sensitivity grid.
  InterfaceContract with_kappa(NegType t, int prefix) const;
  /// Every prefix trained against one view (used by full-caption baselines).
  InterfaceContract with_uniform_view(ViewLevel v) const;

  bool operator==(const InterfaceContract&) const = default;
};

/// z[0:k] / ||z[0:k]||; throws kZeroPrefix when the norm is below 1e-12.
Vector prefix_normalize(const Eigen::Ref<const Vector>& z, int k);

/// tau^-1 * <pi_k(z_img), pi_k(z_txt)>.
double prefix_score(const Eigen::Ref<const Vector>& z_img, const Eigen::Ref<const Vector>& z_txt, int k,
                    double tau);

/// Row-wise prefix normalization of an N x D matrix.
Matrix prefix_rows(const Matrix& z, int k);

}  // namespace grasp
