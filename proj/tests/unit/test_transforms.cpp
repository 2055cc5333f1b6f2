#include "grasp/contract.hpp"
#include "grasp/model.hpp"
#include "grasp/objective.hpp"
#include "grasp/orthogonal.hpp"
#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace grasp;

namespace {

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kUsage;
}

double brute_force_assignment(const Matrix& W) {
  std::vector<int> perm(static_cast<std::size_t>(W.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = -1e300;
  do {
    double s = 0;
    for (std::size_t i = 0; i < perm.size(); ++i) s += W(static_cast<Eigen::Index>(i), perm[i]);
    best = std::max(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_CASE("ratio contract") {
  const InterfaceContract c = InterfaceContract::ratio(512);
  CHECK(c.prefixes == std::vector<int>{32, 64, 128, 256, 512});
  CHECK(c.views == std::vector<ViewLevel>{ViewLevel::kG0, ViewLevel::kG1, ViewLevel::kG2, ViewLevel::kG3,
                                          ViewLevel::kG3});
  CHECK(c.kappa_of(NegType::kObject) == 32);
  CHECK(c.kappa_of(NegType::kAttribute) == 64);
  CHECK(c.kappa_of(NegType::kRelation) == 128);
  CHECK(c.kappa_of(NegType::kAction) == 128);
  CHECK(c.kappa_of(NegType::kOrder) == 128);
  CHECK(c.kappa_of(NegType::kFull) == 256);
  CHECK(c.assigned_prefix(ViewLevel::kG3) == 256);
  CHECK(c.position(128) == 2);
  CHECK(c.position(100) == -1);
  c.validate();
  CHECK(code_of([] { InterfaceContract::ratio(40); }) == ErrorCode::kInvalidContract);
}

TEST_CASE("contract validation") {
  InterfaceContract c = InterfaceContract::ratio(64);
  CHECK(code_of([&] { c.with_kappa(NegType::kRelation, 20).validate(); }) == ErrorCode::kInvalidContract);
  InterfaceContract unsorted = c;
  std::swap(unsorted.prefixes[0], unsorted.prefixes[1]);
  CHECK(code_of([&] { unsorted.validate(); }) == ErrorCode::kInvalidContract);
  InterfaceContract short_last = c;
  short_last.prefixes.back() = 48;
  CHECK(code_of([&] { short_last.validate(); }) == ErrorCode::kInvalidContract);
  InterfaceContract views = c;
  views.views.pop_back();
  CHECK(code_of([&] { views.validate(); }) == ErrorCode::kInvalidContract);
  const InterfaceContract uniform = c.with_uniform_view(ViewLevel::kG3);
  CHECK_FALSE(uniform.assigned_prefix(ViewLevel::kG0).has_value());
  CHECK(uniform.assigned_prefix(ViewLevel::kG3) == 4);
}

TEST_CASE("prefix score worked example") {
  Vector img(3), txt(3);
  img << 1, 0, 5;
  txt << 1, std::sqrt(3.0), -2;
  CHECK(prefix_score(img, txt, 2, 0.07) == doctest::Approx(7.142857142857143).epsilon(1e-12));
  CHECK(prefix_normalize(img, 1)(0) == 1.0);
  Vector zero_head(3);
  zero_head << 0, 0, 1;
  CHECK(code_of([&] { prefix_normalize(zero_head, 2); }) == ErrorCode::kZeroPrefix);
  CHECK(code_of([&] { prefix_normalize(zero_head, 4); }) == ErrorCode::kDimMismatch);
}

TEST_CASE("prefix score is invariant to positive rescaling of either input") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Matrix rows = test::random_unit_rows(2, 16, seed);
    const Vector a = rows.row(0).transpose(), b = rows.row(1).transpose();
    for (int k : {1, 4, 16}) {
      const double s = prefix_score(a, b, k, 0.5);
      CHECK(prefix_score(3.0 * a, 0.2 * b, k, 0.5) == doctest::Approx(s).epsilon(1e-12));
      CHECK(std::abs(s) <= 2.0 + 1e-12);
    }
  }
}

TEST_CASE("Cayley worked example") {
  Matrix B = Matrix::Zero(2, 2);
  B(0, 1) = 1.0;
  const Matrix R = cayley_build(B).R;
  Matrix expected(2, 2);
  expected << 0, -1, 1, 0;
  CHECK((R - expected).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((cayley_build(Matrix::Zero(5, 5)).R - Matrix::Identity(5, 5)).norm() == 0.0);
  // symmetric part of B does not matter
  const Matrix Bs = test::random_matrix(6, 6, 1.0, 4);
  const Matrix sym = Bs + Bs.transpose();
  CHECK((cayley_build(Bs).R - cayley_build(Bs + sym).R).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("Cayley output is orthogonal with determinant +1") {
  for (int D : {2, 3, 8, 33}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Matrix R = cayley_build(test::random_matrix(D, D, 2.0, seed)).R;
      CHECK(test::max_abs_orth_error(R) <= 1e-10);
      CHECK(R.determinant() == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
  CHECK(code_of([] { cayley_build(Matrix::Zero(2, 3)); }) == ErrorCode::kDimMismatch);
}

TEST_CASE("Cayley stays well defined when det(I + A) overflows") {
  const Matrix B = test::random_matrix(512, 512, 2.0, 3);
  const Matrix A = B - B.transpose();
  CHECK_FALSE(std::isfinite((Matrix::Identity(512, 512) + A).partialPivLu().determinant()));
  CHECK(test::max_abs_orth_error(cayley_build(B).R) <= 1e-10);
}

TEST_CASE("Cayley backward matches central differences") {
  const int D = 5;
  const Matrix G = test::random_matrix(D, D, 1.0, 8);
  const Objective f = [&](const Vector& x, Vector* grad) {
    const Matrix B = Eigen::Map<const Matrix>(x.data(), D, D);
    const Matrix R = cayley_build(B).R;
    if (grad) {
      const Matrix g = cayley_backward(B, R, G);
      *grad = Eigen::Map<const Vector>(g.data(), g.size());
    }
    return (G.array() * R.array()).sum();
  };
  const Matrix B0 = test::random_matrix(D, D, 0.5, 9);
  const auto rep = finite_difference_check(f, Eigen::Map<const Vector>(B0.data(), B0.size()), 1e-6);
  CHECK(rep.coordinates_checked == 25);
  CHECK(rep.max_relative_error < 1e-6);
}

TEST_CASE("butterfly pairs double their stride per stage") {
  using P = std::vector<std::pair<int, int>>;
  CHECK(butterfly_pairs(8, 0) == P{{0, 1}, {2, 3}, {4, 5}, {6, 7}});
  CHECK(butterfly_pairs(8, 1) == P{{0, 2}, {1, 3}, {4, 6}, {5, 7}});
  CHECK(butterfly_pairs(8, 2) == P{{0, 4}, {1, 5}, {2, 6}, {3, 7}});
  CHECK(log2_exact(512) == 9);
  CHECK(code_of([] { log2_exact(12); }) == ErrorCode::kNotPowerOfTwo);
  CHECK(code_of([] { log2_exact(1); }) == ErrorCode::kNotPowerOfTwo);
}

TEST_CASE("butterfly worked example: one Givens rotation") {
  ButterflyParams p = ButterflyParams::zeros(4, 1);
  CHECK(p.angles.rows() == 2);
  CHECK(p.angles.cols() == 2);
  CHECK((butterfly_build(p).R - Matrix::Identity(4, 4)).norm() == 0.0);
  p.angles(1, 0) = M_PI / 6;  // stage 1, pair (0, 2)
  const Matrix R = butterfly_build(p).R;
  Matrix expected = Matrix::Identity(4, 4);
  expected(0, 0) = expected(2, 2) = std::cos(M_PI / 6);
  expected(0, 2) = -0.5;
  expected(2, 0) = 0.5;
  CHECK((R - expected).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("butterfly is orthogonal and its backward matches central differences") {
  for (int D : {2, 8, 64}) {
    ButterflyParams p = ButterflyParams::zeros(D, 3);
    p.angles = test::random_matrix(p.angles.rows(), p.angles.cols(), 1.0, static_cast<std::uint64_t>(D));
    CHECK(test::max_abs_orth_error(butterfly_build(p).R) <= 1e-12);
  }
  ButterflyParams p = ButterflyParams::zeros(8, 2);
  const Matrix G = test::random_matrix(8, 8, 1.0, 1);
  const Objective f = [&](const Vector& x, Vector* grad) {
    ButterflyParams q = p;
    q.angles = Eigen::Map<const Matrix>(x.data(), p.angles.rows(), p.angles.cols());
    const Matrix R = butterfly_build(q).R;
    if (grad) {
      const Matrix g = butterfly_backward(q, R, G);
      *grad = Eigen::Map<const Vector>(g.data(), g.size());
    }
    return (G.array() * R.array()).sum();
  };
  const Matrix a0 = test::random_matrix(p.angles.rows(), p.angles.cols(), 1.0, 2);
  CHECK(finite_difference_check(f, Eigen::Map<const Vector>(a0.data(), a0.size()), 1e-6).max_relative_error < 1e-6);
}

TEST_CASE("random_orthogonal is seeded and orthogonal") {
  const Matrix a = random_orthogonal(16, 5).R;
  CHECK(a == random_orthogonal(16, 5).R);
  CHECK_FALSE(a == random_orthogonal(16, 6).R);
  CHECK(test::max_abs_orth_error(a) < 1e-12);
}

TEST_CASE("PCA orders components by variance and fixes signs") {
  const Matrix Q = random_orthogonal(4, 1).R;
  Matrix latent = test::random_matrix(3000, 4, 1.0, 7);
  latent.col(0) *= 3.0;
  latent.col(1) *= 2.0;
  latent.col(3) *= 0.5;
  const Matrix rows = latent * Q.transpose();
  const PcaResult pca = fit_pca(rows);
  CHECK_FALSE(pca.rank_deficient);
  CHECK(test::max_abs_orth_error(pca.projection.R) < 1e-12);
  for (int c = 1; c < 4; ++c) CHECK(pca.eigenvalues(c - 1) >= pca.eigenvalues(c));
  CHECK(pca.eigenvalues(0) == doctest::Approx(9.0).epsilon(0.1));
  // top component aligns with the stretched latent axis
  CHECK(std::abs(pca.projection.R.row(0).dot(Q.col(0))) > 0.99);
  for (int c = 0; c < 4; ++c) {
    Eigen::Index arg;
    pca.projection.R.row(c).cwiseAbs().maxCoeff(&arg);
    CHECK(pca.projection.R(c, arg) > 0);
  }
  CHECK(pca.captured_variance(4) == doctest::Approx(pca.eigenvalues.sum()));
  CHECK(fit_pca(test::random_matrix(3, 5, 1.0, 1)).rank_deficient);
  CHECK(code_of([] { fit_pca(Matrix::Ones(5, 3)); }) == ErrorCode::kDegenerateCovariance);
}

TEST_CASE("max-weight assignment agrees with brute force") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const int n = 1 + static_cast<int>(seed % 7);
    const Matrix W = test::random_matrix(n, n, 1.0, seed + 100);
    const std::vector<int> a = max_weight_assignment(W);
    std::vector<int> sorted = a;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> iota(static_cast<std::size_t>(n));
    std::iota(iota.begin(), iota.end(), 0);
    CHECK(sorted == iota);
    double total = 0;
    for (int i = 0; i < n; ++i) total += W(i, a[static_cast<std::size_t>(i)]);
    CHECK(total == doctest::Approx(brute_force_assignment(W)).epsilon(1e-12));
  }
}

TEST_CASE("permutation energy") {
  CHECK(permutation_energy(Matrix::Identity(8, 8)) == doctest::Approx(100.0));
  Matrix signed_perm = Matrix::Zero(3, 3);
  signed_perm(0, 2) = -1;
  signed_perm(1, 0) = 1;
  signed_perm(2, 1) = -1;
  CHECK(permutation_energy(signed_perm) == doctest::Approx(100.0));
  Matrix h(2, 2);
  h << 1, 1, 1, -1;
  CHECK(permutation_energy(h / std::sqrt(2.0)) == doctest::Approx(50.0));
  const double dense = permutation_energy(random_orthogonal(64, 3).R);
  CHECK(dense < 30.0);
  CHECK(dense >= 100.0 / 64.0);
}

TEST_CASE("trainable parameter counts at D=512") {
  const auto count = [](Variant v, int stacks = 8) {
    TransformSpec s;
    s.variant = v;
    s.butterfly_stacks = stacks;
    return param_count(s, 512, 5);
  };
  CHECK(count(Variant::kDenseCayley) == 262149);
  CHECK(count(Variant::kButterfly) == 18437);
  CHECK(count(Variant::kButterfly, 4) == 9221);
  CHECK(count(Variant::kPermutation) == 262149);
  CHECK(count(Variant::kSignedPermutation) == 262661);
  CHECK(count(Variant::kMlp) == 1052165);
  CHECK(count(Variant::kLowRank) == 294918);
  CHECK(count(Variant::kIdentity) == 0);
  CHECK(count(Variant::kPca) == 0);
  CHECK(count(Variant::kRandomRotation) == 0);
}

TEST_CASE("initialized parameter containers match param_count") {
  for (Variant v : {Variant::kDenseCayley, Variant::kButterfly, Variant::kPermutation, Variant::kSignedPermutation,
                    Variant::kLowRank, Variant::kMlp}) {
    TransformSpec s;
    s.variant = v;
    s.adaptor_rank = 4;
    s.butterfly_stacks = 2;
    const TransformModel m = TransformModel::initialize(s, 16, 5, 1);
    CAPTURE(to_string(v));
    CHECK(m.params().scalar_count() == param_count(s, 16, 5));
    CHECK(m.params().log_temperatures.size() == 5);
    CHECK(std::exp(m.params().log_temperatures(0)) == doctest::Approx(0.07));
  }
  CHECK(code_of([] { TransformModel::initialize({Variant::kPca}, 16, 5, 1); }) == ErrorCode::kUnknownVariant);
  CHECK(code_of([] { parse_variant("spline"); }) == ErrorCode::kUnknownVariant);
}

TEST_CASE("evaluation transforms of the orthogonal family are orthogonal") {
  for (Variant v : {Variant::kDenseCayley, Variant::kButterfly, Variant::kPermutation, Variant::kSignedPermutation}) {
    TransformSpec s;
    s.variant = v;
    TransformModel m = TransformModel::initialize(s, 16, 5, 2);
    for (auto& b : m.params().blocks) b.value += test::random_matrix(b.value.rows(), b.value.cols(), 0.5, 3);
    const Transform t = m.evaluation_transform();
    CAPTURE(to_string(v));
    CHECK(m.orthogonal_family());
    CHECK(t.is_orthogonal());
    CHECK(test::max_abs_orth_error(t.matrix()) <= 1e-12);
    if (v == Variant::kPermutation || v == Variant::kSignedPermutation) {
      CHECK(permutation_energy(t.matrix()) == doctest::Approx(100.0));
    }
  }
}

TEST_CASE("transform application") {
  const Transform id = Transform::identity(4);
  const Matrix rows = test::random_unit_rows(3, 4, 1);
  CHECK(id.apply(rows) == rows);
  CHECK(code_of([&] { id.apply(Matrix(2, 5)); }) == ErrorCode::kDimMismatch);
  const OrthogonalTransform Q = random_orthogonal(4, 2);
  const Matrix out = Transform::from(Q).apply(rows);
  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK((out.row(i).transpose() - Q.R * rows.row(i).transpose()).norm() < 1e-14);
  }
  const MatrixF outf = Transform::from(Q).apply(MatrixF(rows.cast<float>()));
  CHECK((outf.cast<double>() - out).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("ParamSet flatten/assign round trip") {
  TransformSpec s;
  s.variant = Variant::kLowRank;
  s.adaptor_rank = 3;
  TransformModel m = TransformModel::initialize(s, 8, 5, 4);
  const Vector flat = m.params().flatten();
  CHECK(static_cast<std::size_t>(flat.size()) == m.params().scalar_count());
  ParamSet z = m.params().zeros_like();
  CHECK(z.flatten().norm() == 0.0);
  z.assign(flat);
  CHECK(z.flatten() == flat);
  CHECK(code_of([&] { z.assign(Vector(3)); }) == ErrorCode::kDimMismatch);
}
