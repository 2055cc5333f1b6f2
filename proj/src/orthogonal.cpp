#include "grasp/orthogonal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace grasp {

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kCayley: return "cayley";
    case Provenance::kButterfly: return "butterfly";
    case Provenance::kPermutation: return "permutation";
    case Provenance::kSignedPermutation: return "signed_permutation";
    case Provenance::kRandom: return "random";
    case Provenance::kIdentity: return "identity";
    case Provenance::kPca: return "pca";
  }
  return "identity";
}

double OrthogonalTransform::orthogonality_error() const {
  const Matrix e = R.transpose() * R - Matrix::Identity(R.cols(), R.cols());
  return e.cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------- Cayley

namespace {

Eigen::PartialPivLU<Matrix> cayley_factor(const Matrix& A) {
  const Matrix M = Matrix::Identity(A.rows(), A.cols()) + A;
  Eigen::PartialPivLU<Matrix> lu(M);
  // I + A has eigenvalues 1 + i*mu, so it is never singular analytically; the determinant
  // itself overflows at large D, so inspect the pivots instead.
  const auto pivots = lu.matrixLU().diagonal();
  if (!pivots.allFinite() || pivots.cwiseAbs().minCoeff() < 1e-300) {
    throw Error(ErrorCode::kSingularSolve, "I + A factorization failed");
  }
  return lu;
}

}  // namespace

OrthogonalTransform cayley_build(const Matrix& skew_param) {
  if (skew_param.rows() != skew_param.cols()) throw Error(ErrorCode::kDimMismatch, "B must be square");
  if (!skew_param.allFinite()) throw Error(ErrorCode::kSingularSolve, "B has non-finite entries");
  const Matrix A = skew_param - skew_param.transpose();
  const auto lu = cayley_factor(A);
  const Matrix rhs = Matrix::Identity(A.rows(), A.cols()) - A;
  return {lu.solve(rhs), Provenance::kCayley};
}

Matrix cayley_backward(const Matrix& skew_param, const Matrix& R, const Matrix& grad_R) {
  // dR = -(I+A)^{-1} dA (R + I)  =>  dL/dA = -(I+A)^{-T} G (R + I)^T.
  const Matrix A = skew_param - skew_param.transpose();
  const auto lu = cayley_factor(A);
  const Matrix y = lu.transpose().solve(grad_R);
  const Matrix grad_A = -y * (R + Matrix::Identity(R.rows(), R.cols())).transpose();
  return grad_A - grad_A.transpose();
}

// ---------------------------------------------------------------- butterfly

int log2_exact(int dim) {
  if (dim < 2 || (dim & (dim - 1)) != 0) {
    throw Error(ErrorCode::kNotPowerOfTwo, "butterfly needs D a power of two >= 2, got " + std::to_string(dim));
  }
  int bits = 0;
  while ((1 << bits) < dim) ++bits;
  return bits;
}

ButterflyParams ButterflyParams::zeros(int dim, int stacks) {
  const int depth = log2_exact(dim);
  if (stacks < 1) throw Error(ErrorCode::kConfig, "butterfly needs at least one stack");
  return {dim, stacks, Matrix::Zero(stacks * depth, dim / 2)};
}

std::vector<std::pair<int, int>> butterfly_pairs(int dim, int stage_in_stack) {
  const int stride = 1 << stage_in_stack;
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<std::size_t>(dim / 2));
  for (int i = 0; i < dim; ++i) {
    if ((i & stride) == 0) pairs.emplace_back(i, i + stride);
  }
  return pairs;
}

namespace {

// Left-multiplies M by the Givens stage (rows i, j mixed). transpose applies S^T.
void apply_stage(Matrix& M, const std::vector<std::pair<int, int>>& pairs,
                 const Eigen::Ref<const Eigen::RowVectorXd>& angles, bool transpose) {
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [i, j] = pairs[p];
    const double c = std::cos(angles(static_cast<Eigen::Index>(p)));
    const double s = transpose ? -std::sin(angles(static_cast<Eigen::Index>(p)))
                               : std::sin(angles(static_cast<Eigen::Index>(p)));
    const Eigen::RowVectorXd ri = M.row(i);
    const Eigen::RowVectorXd rj = M.row(j);
    M.row(i) = c * ri - s * rj;
    M.row(j) = s * ri + c * rj;
  }
}

void check_butterfly(const ButterflyParams& params) {
  const int depth = log2_exact(params.dim);
  if (params.angles.rows() != params.stacks * depth || params.angles.cols() != params.dim / 2) {
    throw Error(ErrorCode::kDimMismatch, "butterfly angle matrix has the wrong shape");
  }
}

}  // namespace

OrthogonalTransform butterfly_build(const ButterflyParams& params) {
  check_butterfly(params);
  const int depth = log2_exact(params.dim);
  Matrix M = Matrix::Identity(params.dim, params.dim);
  for (Eigen::Index l = 0; l < params.angles.rows(); ++l) {
    apply_stage(M, butterfly_pairs(params.dim, static_cast<int>(l) % depth), params.angles.row(l), false);
  }
  return {M, Provenance::kButterfly};
}

Matrix butterfly_backward(const ButterflyParams& params, const Matrix& R, const Matrix& grad_R) {
  // W = S_L ... S_1. With H_l = (S_L..S_{l+1})^T G and M_{l-1} = S_{l-1}..S_1,
  // dL/dS_l = H_l M_{l-1}^T; only the four entries per pair matter.
  check_butterfly(params);
  const int depth = log2_exact(params.dim);
  Matrix grad = Matrix::Zero(params.angles.rows(), params.angles.cols());
  Matrix H = grad_R;
  Matrix M = R;
  for (Eigen::Index l = params.angles.rows() - 1; l >= 0; --l) {
    const auto pairs = butterfly_pairs(params.dim, static_cast<int>(l) % depth);
    apply_stage(M, pairs, params.angles.row(l), true);  // M <- S_l^T M = M_{l-1}
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const auto [i, j] = pairs[p];
      const double th = params.angles(l, static_cast<Eigen::Index>(p));
      const double c = std::cos(th), s = std::sin(th);
      const double g_ii = H.row(i).dot(M.row(i));
      const double g_ij = H.row(i).dot(M.row(j));
      const double g_ji = H.row(j).dot(M.row(i));
      const double g_jj = H.row(j).dot(M.row(j));
      grad(l, static_cast<Eigen::Index>(p)) = -s * g_ii - c * g_ij + c * g_ji - s * g_jj;
    }
    apply_stage(H, pairs, params.angles.row(l), true);  // H <- S_l^T H
  }
  return grad;
}

// ---------------------------------------------------------------- random / PCA

OrthogonalTransform random_orthogonal(int dim, std::uint64_t seed) {
  if (dim < 1) throw Error(ErrorCode::kDimMismatch, "D must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix G(dim, dim);
  for (Eigen::Index c = 0; c < G.cols(); ++c)
    for (Eigen::Index r = 0; r < G.rows(); ++r) G(r, c) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(G);
  Matrix Q = qr.householderQ();
  const Matrix upper = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < dim; ++i) {
    if (upper(i, i) < 0) Q.col(i) = -Q.col(i);
  }
  return {Q, Provenance::kRandom};
}

double PcaResult::captured_variance(int k) const {
  k = std::clamp(k, 0, static_cast<int>(eigenvalues.size()));
  return eigenvalues.head(k).sum();
}

PcaResult fit_pca(const Matrix& rows) {
  if (rows.rows() < 1 || rows.cols() < 1) throw Error(ErrorCode::kDegenerateCovariance, "no rows");
  const Eigen::RowVectorXd mean = rows.colwise().mean();
  const Matrix centered = rows.rowwise() - mean;
  if (rows.rows() < 2 || centered.cwiseAbs().maxCoeff() == 0.0) {
    throw Error(ErrorCode::kDegenerateCovariance, "all rows are equal");
  }
  const Matrix cov = centered.transpose() * centered / static_cast<double>(rows.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const Eigen::Index d = rows.cols();
  PcaResult out;
  out.rank_deficient = rows.rows() < d;
  out.eigenvalues.resize(d);
  out.projection.R.resize(d, d);
  out.projection.provenance = Provenance::kPca;
  for (Eigen::Index c = 0; c < d; ++c) {
    const Eigen::Index src = d - 1 - c;  // ascending -> descending
    Vector v = eig.eigenvectors().col(src);
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      if (std::abs(v(i)) > best + 1e-12) {
        best = std::abs(v(i));
        arg = i;
      }
    }
    if (v(arg) < 0) v = -v;
    out.projection.R.row(c) = v.transpose();
    out.eigenvalues(c) = std::max(0.0, eig.eigenvalues()(src));
  }
  return out;
}

// ---------------------------------------------------------------- assignment

std::vector<int> max_weight_assignment(const Matrix& weights) {
  const int n = static_cast<int>(weights.rows());
  if (weights.cols() != n) throw Error(ErrorCode::kDimMismatch, "assignment needs a square matrix");
  if (n == 0) return {};
  // Kuhn-Munkres with potentials on cost = max - w (1-based arrays).
  const double top = weights.maxCoeff();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = (top - weights(i0 - 1, j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j) row_to_col[static_cast<std::size_t>(match[j] - 1)] = j - 1;
  return row_to_col;
}

double permutation_energy(const Matrix& R) {
  if (R.rows() != R.cols()) throw Error(ErrorCode::kDimMismatch, "R must be square");
  const Matrix energy = R.cwiseAbs2();
  const double total = energy.sum();
  if (total == 0.0) return 0.0;
  const auto assign = max_weight_assignment(energy);
  double best = 0.0;
  for (std::size_t i = 0; i < assign.size(); ++i) best += energy(static_cast<Eigen::Index>(i), assign[i]);
  return 100.0 * best / total;
}

}  // namespace grasp
