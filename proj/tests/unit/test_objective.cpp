#include "grasp/objective.hpp"
#include "support.hpp"

#include <cmath>

using namespace grasp;

namespace {

// Every member set to the same rows; callers overwrite what they need.
Batch uniform_batch(const Matrix& rows) {
  Batch b;
  b.image = rows;
  for (auto& v : b.views) v = rows;
  for (auto& n : b.negatives) n = rows;
  return b;
}

InterfaceContract single_prefix(int dim, ViewLevel view) {
  InterfaceContract c;
  c.dim = dim;
  c.prefixes = {dim};
  c.views = {view};
  c.kappa.fill(dim);
  c.validate();
  return c;
}

Batch random_batch(Eigen::Index n, int dim, std::uint64_t seed) {
  Batch b;
  b.image = test::random_unit_rows(n, dim, seed);
  for (int v = 0; v < kNumViews; ++v) b.views[v] = test::random_unit_rows(n, dim, seed * 31 + 1 + v);
  for (int t = 0; t < kNumNegTypes; ++t) b.negatives[t] = test::random_unit_rows(n, dim, seed * 31 + 10 + t);
  return b;
}

}  // namespace

TEST_CASE("default retention weights halve per level of coarseness") {
  const Matrix a = LossConfig{}.retention_weights(InterfaceContract::ratio(64));
  CHECK(a.rows() == 5);
  CHECK(a.row(0).norm() == 0.0);
  CHECK(a(1, 0) == 0.25);
  CHECK(a.row(1).tail(3).norm() == 0.0);
  CHECK(a(2, 0) == 0.125);
  CHECK(a(2, 1) == 0.25);
  for (int p : {3, 4}) {
    CHECK(a(p, 0) == 0.0625);
    CHECK(a(p, 1) == 0.125);
    CHECK(a(p, 2) == 0.25);
    CHECK(a(p, 3) == 0.0);
  }
}

TEST_CASE("loss config validation") {
  const InterfaceContract c = InterfaceContract::ratio(32);
  LossConfig cfg;
  cfg.lambda_rank = -1;
  CHECK_THROWS_AS(cfg.validate(c), Error);
  cfg = {};
  cfg.retention = Matrix::Zero(5, 4);
  cfg.retention(0, 0) = 0.5;  // G0 prefix has no coarser view
  CHECK_THROWS_AS(cfg.validate(c), Error);
  cfg = {};
  cfg.align_prefix_weights = {1, 1};
  CHECK_THROWS_AS(cfg.validate(c), Error);
  LossConfig{}.validate(c);
}

TEST_CASE("InfoNCE worked example") {
  const Batch one = uniform_batch(Matrix::Identity(1, 2));
  const InterfaceContract c = single_prefix(2, ViewLevel::kG3);
  CHECK(loss_align(one, c, Vector::Zero(1)) == doctest::Approx(0.0));
  const Batch two = uniform_batch(Matrix::Identity(2, 2));
  CHECK(loss_align(two, c, Vector::Zero(1)) == doctest::Approx(std::log1p(std::exp(-1.0))).epsilon(1e-12));
  // lower temperature sharpens the already correct ranking
  CHECK(loss_align(two, c, Vector::Constant(1, std::log(0.1))) ==
        doctest::Approx(std::log1p(std::exp(-10.0))).epsilon(1e-9));
}

TEST_CASE("rank hinge worked example") {
  Matrix rows(1, 2);
  rows << 1, 0;
  Batch b = uniform_batch(rows);
  b.negatives[index(NegType::kRelation)] << 0.95, std::sqrt(1 - 0.95 * 0.95);
  const InterfaceContract c = single_prefix(2, ViewLevel::kG3);
  std::array<bool, kNumNegTypes> only_rel{};
  only_rel[index(NegType::kRelation)] = true;
  std::array<double, kNumNegTypes> margins;
  margins.fill(0.1);
  CHECK(loss_rank(b, c, margins, only_rel) == doctest::Approx(0.05));
  // identical negatives have zero gap: full margin for each of the other five types
  CHECK(loss_rank(b, c, margins) == doctest::Approx(0.55));
  margins.fill(0.01);
  CHECK(loss_rank(b, c, margins, only_rel) == doctest::Approx(0.0));
}

TEST_CASE("invariance hinge worked example") {
  Matrix rows(1, 4);
  rows << 1, 0, 0, 0;
  Batch b = uniform_batch(rows);
  b.negatives[index(NegType::kRelation)] << 0.95, std::sqrt(1 - 0.95 * 0.95), 0, 0;
  InterfaceContract c;
  c.dim = 4;
  c.prefixes = {2, 4};
  c.views = {ViewLevel::kG2, ViewLevel::kG3};
  c.kappa.fill(4);
  c.validate();
  std::array<bool, kNumNegTypes> only_rel{};
  only_rel[index(NegType::kRelation)] = true;
  std::array<double, kNumNegTypes> tol;
  tol.fill(0.02);
  CHECK(loss_invariance(b, c, tol, only_rel) == doctest::Approx(0.03));
  // at k=4 relation is on the rank side; invariance ignores it
  tol.fill(0.06);
  CHECK(loss_invariance(b, c, tol, only_rel) == doctest::Approx(0.0));
}

TEST_CASE("preservation and ortho penalty") {
  const Matrix rows = test::random_unit_rows(6, 8, 2);
  CHECK(loss_preservation(rows, rows) == 0.0);
  CHECK(loss_preservation(rows, rows * random_orthogonal(8, 1).R.transpose()) < 1e-24);
  CHECK(loss_preservation(rows, 3.0 * rows) < 1e-24);
  CHECK(loss_preservation(rows, test::random_unit_rows(6, 8, 3)) > 0.0);
  CHECK(ortho_penalty(Matrix::Identity(5, 5)) == 0.0);
  CHECK(ortho_penalty(2.0 * Matrix::Identity(4, 4)) == doctest::Approx(9.0 / 4.0));
}

TEST_CASE("finite differences on a quadratic are exact to rounding") {
  const Matrix M = test::random_matrix(6, 6, 1.0, 1);
  const Matrix A = M + M.transpose();
  const Objective f = [&](const Vector& x, Vector* g) {
    if (g) *g = 2.0 * A * x;
    return x.dot(A * x);
  };
  const Vector x0 = test::random_matrix(6, 1, 1.0, 2).col(0);
  const GradCheckReport r = finite_difference_check(f, x0, 1e-4);
  CHECK(r.coordinates_checked == 6);
  CHECK(r.max_relative_error <= 1e-8);
}

TEST_CASE("central-difference error on a quartic shrinks with the step squared") {
  for (double x : {0.5, 0.8, 1.3}) {
    const Objective f = [](const Vector& v, Vector* g) {
      if (g) *g = 4.0 * v.array().cube().matrix();
      return v.array().pow(4).sum();
    };
    const Vector x0 = Vector::Constant(1, x);
    const double e1 = finite_difference_check(f, x0, 1e-2).max_relative_error;
    const double e2 = finite_difference_check(f, x0, 5e-3).max_relative_error;
    // numeric = 4x^3 + 4x h^2, so the relative error is h^2 / x^2
    CHECK(e1 == doctest::Approx(1e-4 / (x * x)).epsilon(1e-4));
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(1e-3));
  }
}

TEST_CASE("total loss matches its individual terms") {
  const int D = 16;
  const InterfaceContract c = InterfaceContract::ratio(D);
  TransformModel m = TransformModel::initialize({Variant::kDenseCayley}, D, 5, 4);
  m.params().block("skew") = test::random_matrix(D, D, 0.3, 5);
  m.params().log_temperatures = (test::random_matrix(5, 1, 0.2, 6).col(0).array() + std::log(0.07)).matrix();
  const Batch batch = random_batch(6, D, 7);
  LossConfig cfg;
  const LossResult r = total_loss_and_gradient(m, batch, c, cfg, false);
  const Batch z = batch.transformed(m.evaluation_transform());
  const Vector& lt = m.params().log_temperatures;
  CHECK(r.terms.align == doctest::Approx(loss_align(z, c, lt)).epsilon(1e-12));
  CHECK(r.terms.retention == doctest::Approx(loss_retention(z, c, lt, cfg.retention_weights(c))).epsilon(1e-12));
  CHECK(r.terms.rank == doctest::Approx(loss_rank(z, c, cfg.margins)).epsilon(1e-12));
  CHECK(r.terms.invariance == doctest::Approx(loss_invariance(z, c, cfg.tolerances)).epsilon(1e-12));
  Matrix raw(12, D), out(12, D);
  raw << batch.image, batch.views[3];
  out << z.image, z.views[3];
  CHECK(r.terms.preservation == doctest::Approx(loss_preservation(raw, out)).epsilon(1e-9));
  CHECK(r.terms.ortho == 0.0);
  const double total = r.terms.align + 0.5 * r.terms.retention + r.terms.rank + 0.5 * r.terms.invariance +
                       10.0 * r.terms.preservation;
  CHECK(r.terms.total == doctest::Approx(total).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central differences for every variant") {
  const int D = 8;
  InterfaceContract contract;
  contract.dim = D;
  contract.prefixes = {2, 4, 8};
  contract.views = {ViewLevel::kG0, ViewLevel::kG2, ViewLevel::kG3};
  contract.kappa = {2, 4, 4, 4, 8, 8};
  contract.validate();
  const Batch batch = random_batch(4, D, 11);
  LossConfig cfg;
  cfg.margins.fill(0.5);   // keep hinges active
  cfg.tolerances.fill(0.01);
  for (Variant v : {Variant::kDenseCayley, Variant::kButterfly, Variant::kPermutation, Variant::kSignedPermutation,
                    Variant::kLowRank, Variant::kMlp}) {
    TransformSpec spec;
    spec.variant = v;
    spec.adaptor_rank = 3;
    spec.butterfly_stacks = 2;
    TransformModel m = TransformModel::initialize(spec, D, 3, 12);
    Vector x = m.params().flatten();
    x += test::random_matrix(x.size(), 1, 0.3, 13).col(0);
    m.params().assign(x);
    CAPTURE(to_string(v));
    CHECK(finite_difference_check(m, batch, contract, cfg, 1e-5).max_relative_error < 1e-4);
  }
}

TEST_CASE("align at full dimension has no gradient with respect to the rotation") {
  const int D = 16;
  const InterfaceContract c = InterfaceContract::ratio(D);
  TransformModel m = TransformModel::initialize({Variant::kDenseCayley}, D, 5, 1);
  m.params().block("skew") = test::random_matrix(D, D, 0.4, 2);
  LossConfig cfg;
  cfg.align_prefix_weights = {0, 0, 0, 0, 1};
  cfg.lambda_ret = cfg.lambda_rank = cfg.lambda_inv = cfg.lambda_pres = cfg.lambda_ortho = 0;
  const LossResult r = total_loss_and_gradient(m, random_batch(8, D, 3), c, cfg);
  CHECK(r.terms.align > 0);
  CHECK(r.gradient.block("skew").cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::abs(r.gradient.log_temperatures(4)) > 1e-6);
  CHECK(r.gradient.log_temperatures.head(4).norm() == 0.0);
}

TEST_CASE("disabled types contribute nothing") {
  const int D = 16;
  const InterfaceContract c = InterfaceContract::ratio(D);
  const Batch z = random_batch(5, D, 4);
  std::array<bool, kNumNegTypes> none{};
  CHECK(loss_rank(z, c, LossConfig{}.margins, none) == 0.0);
  CHECK(loss_invariance(z, c, LossConfig{}.tolerances, none) == 0.0);
}

TEST_CASE("batch stacking round trip and shape checks") {
  const Batch b = random_batch(3, 4, 9);
  const Batch u = Batch::unstack(b.stacked(), 3);
  CHECK(u.image == b.image);
  for (int t = 0; t < kNumNegTypes; ++t) CHECK(u.negatives[t] == b.negatives[t]);
  CHECK_THROWS_AS(Batch::unstack(b.stacked(), 4), Error);
  Batch bad = b;
  bad.views[2] = Matrix::Ones(2, 4);
  CHECK_THROWS_AS(bad.stacked(), Error);
}
