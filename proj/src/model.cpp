#include "grasp/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace grasp {

namespace {

constexpr std::array<std::pair<Variant, std::string_view>, 9> kVariantNames = {{
    {Variant::kIdentity, "identity"},
    {Variant::kPca, "pca"},
    {Variant::kRandomRotation, "random_rotation"},
    {Variant::kDenseCayley, "dense_cayley"},
    {Variant::kButterfly, "butterfly"},
    {Variant::kPermutation, "permutation"},
    {Variant::kSignedPermutation, "signed_permutation"},
    {Variant::kLowRank, "low_rank"},
    {Variant::kMlp, "mlp"},
}};

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = normal(rng);
  return m;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double silu(double x) { return x * sigmoid(x); }
double silu_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

Matrix mlp_hidden(const Matrix& X, const Matrix& W1, const Vector& b1) {
  Matrix H = X * W1.transpose();
  H.rowwise() += b1.transpose();
  return H;
}

// Log-domain Sinkhorn: alternate row and column normalization of logits / T.
Matrix sinkhorn(const Matrix& logits, double temperature, int iterations, std::vector<Matrix>* tape) {
  Matrix U = logits / temperature;
  if (tape) tape->clear();
  for (int it = 0; it < iterations; ++it) {
    for (Eigen::Index i = 0; i < U.rows(); ++i) {
      const double m = U.row(i).maxCoeff();
      U.row(i).array() -= m + std::log((U.row(i).array() - m).exp().sum());
    }
    if (tape) tape->push_back(U);
    for (Eigen::Index j = 0; j < U.cols(); ++j) {
      const double m = U.col(j).maxCoeff();
      U.col(j).array() -= m + std::log((U.col(j).array() - m).exp().sum());
    }
    if (tape) tape->push_back(U);
  }
  return U.array().exp().matrix();
}

Matrix sinkhorn_backward(const std::vector<Matrix>& tape, const Matrix& P, const Matrix& grad_P,
                         double temperature) {
  Matrix dU = grad_P.cwiseProduct(P);
  for (std::size_t s = tape.size(); s-- > 0;) {
    const Matrix soft = tape[s].array().exp().matrix();
    if (s % 2 == 1) {  // column normalization
      const Eigen::RowVectorXd sums = dU.colwise().sum();
      dU -= soft.cwiseProduct(Matrix::Ones(dU.rows(), 1) * sums);
    } else {
      const Vector sums = dU.rowwise().sum();
      dU -= soft.cwiseProduct(sums * Matrix::Ones(1, dU.cols()));
    }
  }
  return dU / temperature;
}

Matrix hard_permutation(const Matrix& P) {
  const auto assign = max_weight_assignment(P);
  Matrix W = Matrix::Zero(P.rows(), P.cols());
  for (std::size_t i = 0; i < assign.size(); ++i) W(static_cast<Eigen::Index>(i), assign[i]) = 1.0;
  return W;
}

}  // namespace

std::string_view to_string(Variant v) {
  for (const auto& [k, name] : kVariantNames)
    if (k == v) return name;
  return "identity";
}

Variant parse_variant(std::string_view s) {
  for (const auto& [k, name] : kVariantNames)
    if (name == s) return k;
  throw Error(ErrorCode::kUnknownVariant, "unknown transform variant '" + std::string(s) + "'");
}

std::size_t param_count(const TransformSpec& spec, int dim, int num_prefixes) {
  const auto D = static_cast<std::size_t>(dim);
  const auto K = static_cast<std::size_t>(num_prefixes);
  switch (spec.variant) {
    case Variant::kIdentity:
    case Variant::kPca:
    case Variant::kRandomRotation: return 0;
    case Variant::kDenseCayley:
    case Variant::kPermutation: return D * D + K;
    case Variant::kButterfly:
      return static_cast<std::size_t>(spec.butterfly_stacks) * (D / 2) *
                 static_cast<std::size_t>(log2_exact(dim)) + K;
    case Variant::kSignedPermutation: return D * D + D + K;
    case Variant::kLowRank: return D * D + 2 * D * static_cast<std::size_t>(spec.adaptor_rank) + 1 + K;
    case Variant::kMlp: return 2 * D * (2 * D) + 2 * D + D + 2 * (2 * D) + K;
  }
  throw Error(ErrorCode::kUnknownVariant, "unknown transform variant");
}

// ---------------------------------------------------------------- ParamSet

std::size_t ParamSet::scalar_count() const {
  std::size_t n = static_cast<std::size_t>(log_temperatures.size());
  for (const auto& b : blocks) n += static_cast<std::size_t>(b.value.size());
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet z;
  for (const auto& b : blocks) z.blocks.push_back({b.name, Matrix::Zero(b.value.rows(), b.value.cols())});
  z.log_temperatures = Vector::Zero(log_temperatures.size());
  return z;
}

Matrix& ParamSet::block(std::string_view name) {
  return const_cast<Matrix&>(static_cast<const ParamSet&>(*this).block(name));
}

const Matrix& ParamSet::block(std::string_view name) const {
  for (const auto& b : blocks)
    if (b.name == name) return b.value;
  throw Error(ErrorCode::kConfig, "no parameter block '" + std::string(name) + "'");
}

Vector ParamSet::flatten() const {
  Vector flat(static_cast<Eigen::Index>(scalar_count()));
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    flat.segment(at, b.value.size()) = b.value.reshaped();
    at += b.value.size();
  }
  flat.tail(log_temperatures.size()) = log_temperatures;
  return flat;
}

void ParamSet::assign(const Vector& flat) {
  if (flat.size() != static_cast<Eigen::Index>(scalar_count())) {
    throw Error(ErrorCode::kDimMismatch, "flat parameter vector has the wrong length");
  }
  Eigen::Index at = 0;
  for (auto& b : blocks) {
    b.value.reshaped() = flat.segment(at, b.value.size());
    at += b.value.size();
  }
  log_temperatures = flat.tail(log_temperatures.size());
}

bool ParamSet::all_finite() const {
  if (!log_temperatures.allFinite()) return false;
  return std::all_of(blocks.begin(), blocks.end(), [](const ParamBlock& b) { return b.value.allFinite(); });
}

// ---------------------------------------------------------------- Transform

Transform Transform::identity(int dim) { return linear(Matrix::Identity(dim, dim), Provenance::kIdentity, true); }

Transform Transform::linear(Matrix W, Provenance provenance, bool orthogonal) {
  if (W.rows() != W.cols()) throw Error(ErrorCode::kDimMismatch, "transform matrix must be square");
  Transform t;
  t.dim_ = static_cast<int>(W.rows());
  t.W_ = std::move(W);
  t.provenance_ = provenance;
  t.orthogonal_ = orthogonal;
  return t;
}

Transform Transform::mlp(Mlp weights) {
  Transform t;
  t.dim_ = static_cast<int>(weights.W1.cols());
  t.mlp_ = std::move(weights);
  return t;
}

const Matrix& Transform::matrix() const {
  if (mlp_) throw Error(ErrorCode::kConfig, "MLP transform has no matrix");
  return W_;
}

std::string_view Transform::provenance() const { return mlp_ ? "mlp" : to_string(provenance_); }

Matrix Transform::apply(const Matrix& rows) const {
  if (rows.cols() != dim_) {
    throw Error(ErrorCode::kDimMismatch, "rows have " + std::to_string(rows.cols()) + " columns, transform expects " +
                                             std::to_string(dim_));
  }
  if (!mlp_) return rows * W_.transpose();
  const Mlp& m = *mlp_;
  Matrix U = mlp_hidden(rows, m.W1, m.b1);
  U = (U.array().rowwise() * m.scale.transpose().array()).matrix();
  U.rowwise() += m.shift.transpose();
  const Matrix A = U.unaryExpr(&silu);
  Matrix Z = rows + A * m.W2.transpose();
  Z.rowwise() += m.b2.transpose();
  return Z;
}

MatrixF Transform::apply(const MatrixF& rows) const {
  if (rows.cols() != dim_) throw Error(ErrorCode::kDimMismatch, "row width does not match transform");
  if (!mlp_) {
    const MatrixF Wf = W_.cast<float>();
    return rows * Wf.transpose();
  }
  return apply(Matrix(rows.cast<double>())).cast<float>();
}

// ---------------------------------------------------------------- TransformModel

TransformModel::TransformModel(TransformSpec spec, int dim, ParamSet params)
    : spec_(spec), dim_(dim), params_(std::move(params)) {
  if (param_count(spec_, dim_, static_cast<int>(params_.log_temperatures.size())) != params_.scalar_count()) {
    throw Error(ErrorCode::kDimMismatch, "parameter container does not match the variant");
  }
}

TransformModel TransformModel::initialize(const TransformSpec& spec, int dim, int num_prefixes,
                                          std::uint64_t seed, double init_temperature) {
  std::mt19937_64 rng(seed);
  const Eigen::Index D = dim;
  ParamSet p;
  switch (spec.variant) {
    case Variant::kIdentity:
    case Variant::kPca:
    case Variant::kRandomRotation:
      throw Error(ErrorCode::kUnknownVariant, "variant '" + std::string(to_string(spec.variant)) + "' is not trainable");
    case Variant::kDenseCayley: p.blocks.push_back({"skew", gaussian(D, D, 1e-3, rng)}); break;
    case Variant::kButterfly: {
      const auto zeros = ButterflyParams::zeros(dim, spec.butterfly_stacks);
      p.blocks.push_back({"angles", gaussian(zeros.angles.rows(), zeros.angles.cols(), 1e-3, rng)});
      break;
    }
    case Variant::kPermutation:
    case Variant::kSignedPermutation: {
      Matrix logits = gaussian(D, D, 1e-2, rng);
      logits.diagonal().array() += 4.0;
      p.blocks.push_back({"perm_logits", logits});
      if (spec.variant == Variant::kSignedPermutation) {
        p.blocks.push_back({"sign_logits", Matrix::Constant(D, 1, 2.0)});
      }
      break;
    }
    case Variant::kLowRank: {
      const Eigen::Index r = spec.adaptor_rank;
      p.blocks.push_back({"skew", gaussian(D, D, 1e-3, rng)});
      p.blocks.push_back({"U", gaussian(D, r, 1.0 / std::sqrt(static_cast<double>(D)), rng)});
      p.blocks.push_back({"V", gaussian(D, r, 1.0 / std::sqrt(static_cast<double>(D)), rng)});
      p.blocks.push_back({"gate", Matrix::Zero(1, 1)});
      break;
    }
    case Variant::kMlp:
      p.blocks.push_back({"W1", gaussian(2 * D, D, 1.0 / std::sqrt(static_cast<double>(D)), rng)});
      p.blocks.push_back({"b1", Matrix::Zero(2 * D, 1)});
      p.blocks.push_back({"scale", Matrix::Ones(2 * D, 1)});
      p.blocks.push_back({"shift", Matrix::Zero(2 * D, 1)});
      p.blocks.push_back({"W2", gaussian(D, 2 * D, 1e-2 / std::sqrt(static_cast<double>(2 * D)), rng)});
      p.blocks.push_back({"b2", Matrix::Zero(D, 1)});
      break;
  }
  p.log_temperatures = Vector::Constant(num_prefixes, std::log(init_temperature));
  return TransformModel(spec, dim, std::move(p));
}

bool TransformModel::orthogonal_family() const {
  switch (spec_.variant) {
    case Variant::kDenseCayley:
    case Variant::kButterfly:
    case Variant::kPermutation:
    case Variant::kSignedPermutation: return true;
    default: return false;
  }
}

bool TransformModel::unconstrained_linear() const {
  return spec_.variant == Variant::kPermutation || spec_.variant == Variant::kSignedPermutation ||
         spec_.variant == Variant::kLowRank;
}

Matrix TransformModel::forward(const Matrix& X, Tape& tape) const {
  if (X.cols() != dim_) throw Error(ErrorCode::kDimMismatch, "input width does not match the transform");
  switch (spec_.variant) {
    case Variant::kDenseCayley:
      tape.R = cayley_build(params_.block("skew")).R;
      tape.W = tape.R;
      break;
    case Variant::kButterfly:
      tape.R = butterfly_build({dim_, spec_.butterfly_stacks, params_.block("angles")}).R;
      tape.W = tape.R;
      break;
    case Variant::kPermutation:
      tape.P = sinkhorn(params_.block("perm_logits"), spec_.sinkhorn_temperature, spec_.sinkhorn_iterations,
                        &tape.sinkhorn);
      tape.W = tape.P;
      break;
    case Variant::kSignedPermutation: {
      tape.P = sinkhorn(params_.block("perm_logits"), spec_.sinkhorn_temperature, spec_.sinkhorn_iterations,
                        &tape.sinkhorn);
      const Vector signs = params_.block("sign_logits").col(0).array().tanh().matrix();
      tape.W = signs.asDiagonal() * tape.P;
      break;
    }
    case Variant::kLowRank:
      tape.R = cayley_build(params_.block("skew")).R;
      tape.W = tape.R + params_.block("gate")(0, 0) * params_.block("U") * params_.block("V").transpose();
      break;
    case Variant::kMlp: {
      const Vector scale = params_.block("scale").col(0);
      const Vector shift = params_.block("shift").col(0);
      tape.H = mlp_hidden(X, params_.block("W1"), params_.block("b1").col(0));
      tape.U = (tape.H.array().rowwise() * scale.transpose().array()).matrix();
      tape.U.rowwise() += shift.transpose();
      tape.A = tape.U.unaryExpr(&silu);
      Matrix Z = X + tape.A * params_.block("W2").transpose();
      Z.rowwise() += params_.block("b2").col(0).transpose();
      return Z;
    }
    default: throw Error(ErrorCode::kUnknownVariant, "variant is not trainable");
  }
  return X * tape.W.transpose();
}

void TransformModel::backward(const Tape& tape, const Matrix& X, const Matrix& grad_Z, const Matrix* grad_W,
                              ParamSet& grad) const {
  if (spec_.variant == Variant::kMlp) {
    const Matrix& W2 = params_.block("W2");
    const Vector scale = params_.block("scale").col(0);
    grad.block("b2") += grad_Z.colwise().sum().transpose();
    grad.block("W2") += grad_Z.transpose() * tape.A;
    const Matrix dA = grad_Z * W2;
    const Matrix dU = dA.cwiseProduct(tape.U.unaryExpr(&silu_grad));
    grad.block("scale") += dU.cwiseProduct(tape.H).colwise().sum().transpose();
    grad.block("shift") += dU.colwise().sum().transpose();
    const Matrix dH = (dU.array().rowwise() * scale.transpose().array()).matrix();
    grad.block("W1") += dH.transpose() * X;
    grad.block("b1") += dH.colwise().sum().transpose();
    return;
  }

  Matrix dW = grad_Z.transpose() * X;
  if (grad_W) dW += *grad_W;
  switch (spec_.variant) {
    case Variant::kDenseCayley:
      grad.block("skew") += cayley_backward(params_.block("skew"), tape.R, dW);
      break;
    case Variant::kButterfly:
      grad.block("angles") += butterfly_backward({dim_, spec_.butterfly_stacks, params_.block("angles")}, tape.R, dW);
      break;
    case Variant::kPermutation:
      grad.block("perm_logits") += sinkhorn_backward(tape.sinkhorn, tape.P, dW, spec_.sinkhorn_temperature);
      break;
    case Variant::kSignedPermutation: {
      const Vector signs = params_.block("sign_logits").col(0).array().tanh().matrix();
      const Matrix dP = signs.asDiagonal() * dW;
      grad.block("perm_logits") += sinkhorn_backward(tape.sinkhorn, tape.P, dP, spec_.sinkhorn_temperature);
      const Vector row_dot = dW.cwiseProduct(tape.P).rowwise().sum();
      grad.block("sign_logits") += (row_dot.array() * (1.0 - signs.array().square())).matrix();
      break;
    }
    case Variant::kLowRank: {
      const Matrix& U = params_.block("U");
      const Matrix& V = params_.block("V");
      const double gate = params_.block("gate")(0, 0);
      grad.block("skew") += cayley_backward(params_.block("skew"), tape.R, dW);
      grad.block("gate")(0, 0) += dW.cwiseProduct(U * V.transpose()).sum();
      grad.block("U") += gate * dW * V;
      grad.block("V") += gate * dW.transpose() * U;
      break;
    }
    default: throw Error(ErrorCode::kUnknownVariant, "variant is not trainable");
  }
}

Transform TransformModel::evaluation_transform() const {
  switch (spec_.variant) {
    case Variant::kDenseCayley: return Transform::from(cayley_build(params_.block("skew")));
    case Variant::kButterfly:
      return Transform::from(butterfly_build({dim_, spec_.butterfly_stacks, params_.block("angles")}));
    case Variant::kPermutation: {
      const Matrix P = sinkhorn(params_.block("perm_logits"), spec_.sinkhorn_temperature, spec_.sinkhorn_iterations,
                                nullptr);
      return Transform::linear(hard_permutation(P), Provenance::kPermutation, true);
    }
    case Variant::kSignedPermutation: {
      const Matrix P = sinkhorn(params_.block("perm_logits"), spec_.sinkhorn_temperature, spec_.sinkhorn_iterations,
                                nullptr);
      Vector signs = params_.block("sign_logits").col(0);
      signs = signs.unaryExpr([](double s) { return s < 0 ? -1.0 : 1.0; });
      return Transform::linear(signs.asDiagonal() * hard_permutation(P), Provenance::kSignedPermutation, true);
    }
    case Variant::kLowRank: {
      Tape tape;
      forward(Matrix::Zero(1, dim_), tape);
      return Transform::linear(tape.W, Provenance::kCayley, false);
    }
    case Variant::kMlp:
      return Transform::mlp({params_.block("W1"), params_.block("W2"), params_.block("b1").col(0),
                             params_.block("b2").col(0), params_.block("scale").col(0),
                             params_.block("shift").col(0)});
    default: throw Error(ErrorCode::kUnknownVariant, "variant is not trainable");
  }
}

}  // namespace grasp
