#pragma once

#include "grasp/common.hpp"

#include <cstdint>
#include <vector>

namespace grasp {

enum class Provenance { kCayley, kButterfly, kPermutation, kSignedPermutation, kRandom, kIdentity, kPca };
std::string_view to_string(Provenance p);

/// D x D matrix acting on column vectors, e -> R e.
struct OrthogonalTransform {
  Matrix R;
  Provenance provenance = Provenance::kIdentity;

  int dim() const { return static_cast<int>(R.rows()); }
  /// max |R^T R - I|.
  double orthogonality_error() const;
};

/// A = B - B^T; R = (I + A)^{-1} (I - A) via a partially pivoted LU of I + A.
OrthogonalTransform cayley_build(const Matrix& skew_param);

/// Adjoint of cayley_build: given dL/dR returns dL/dB.
Matrix cayley_backward(const Matrix& skew_param, const Matrix& R, const Matrix& grad_R);

/// Butterfly-Givens parameters: `angles` has stacks * log2(D) rows (one per
/// stage, applied in row order) and D/2 columns (one per disjoint pair).
/// Stage t of each stack pairs (i, i + 2^t) for i with bit t clear.
struct ButterflyParams {
  int dim = 0;
  int stacks = 0;
  Matrix angles;

  static ButterflyParams zeros(int dim, int stacks);
  std::size_t angle_count() const { return static_cast<std::size_t>(angles.size()); }
};

int log2_exact(int dim);  // throws kNotPowerOfTwo

/// The (i, j) coordinate pairs touched by stage `stage_in_stack`.
std::vector<std::pair<int, int>> butterfly_pairs(int dim, int stage_in_stack);

OrthogonalTransform butterfly_build(const ButterflyParams& params);
/// dL/dangles from dL/dR.
Matrix butterfly_backward(const ButterflyParams& params, const Matrix& R, const Matrix& grad_R);

/// Haar-distributed orthogonal matrix: QR of a seeded Gaussian matrix with the
/// sign of R's diagonal folded into Q.
OrthogonalTransform random_orthogonal(int dim, std::uint64_t seed);

struct PcaResult {
  OrthogonalTransform projection;  // rows = components, descending variance
  Vector eigenvalues;              // descending
  bool rank_deficient = false;     // fewer rows than D
  /// Sum of the top-k eigenvalues.
  double captured_variance(int k) const;
};

/// Principal axes of the row covariance. Each component's largest-magnitude
/// entry is made positive (first such entry on ties).
PcaResult fit_pca(const Matrix& rows);

/// Maximum-weight perfect matching on a square matrix; result[i] is the column
/// assigned to row i.
std::vector<int> max_weight_assignment(const Matrix& weights);

/// 100 * max_sigma sum_j R[sigma(j), j]^2 / ||R||_F^2.
double permutation_energy(const Matrix& R);

}  // namespace grasp
