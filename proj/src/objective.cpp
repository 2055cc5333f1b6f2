#include "grasp/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace grasp {

namespace {

constexpr int kMembers = 1 + kNumViews + kNumNegTypes;
constexpr int image_slot() { return 0; }
constexpr int view_slot(ViewLevel v) { return 1 + index(v); }
constexpr int negative_slot(NegType t) { return 1 + kNumViews + index(t); }

struct Prefixed {
  Matrix P;
  Vector inv_norm;
};

Prefixed normalize_prefix(const Matrix& Z, int k) {
  Prefixed out;
  out.P = Z.leftCols(k);
  const Vector norms = out.P.rowwise().norm();
  if (norms.size() > 0 && norms.minCoeff() < 1e-12) throw Error(ErrorCode::kZeroPrefix, "prefix norm below 1e-12");
  out.inv_norm = norms.cwiseInverse();
  out.P = out.inv_norm.asDiagonal() * out.P;
  return out;
}

// dL/dz from dL/dp for p = z / ||z||.
void normalize_backward(const Prefixed& pre, const Matrix& dP, Matrix& dZ) {
  const Vector dots = pre.P.cwiseProduct(dP).rowwise().sum();
  dZ.leftCols(pre.P.cols()) += pre.inv_norm.asDiagonal() * (dP - dots.asDiagonal() * pre.P);
}

Vector logsumexp_rows(const Matrix& S) {
  Vector out(S.rows());
  for (Eigen::Index i = 0; i < S.rows(); ++i) {
    const double m = S.row(i).maxCoeff();
    out(i) = m + std::log((S.row(i).array() - m).exp().sum());
  }
  return out;
}

// Symmetric in-batch InfoNCE between rows of A and T (both unit rows). When
// weight != 0 and gradients are requested, accumulates weight * dL.
double info_nce(const Matrix& A, const Matrix& T, double log_tau, double weight, Matrix* dA, Matrix* dT,
                double* dlog_tau) {
  const Eigen::Index B = A.rows();
  const double tau = std::exp(log_tau);
  const Matrix S = A * T.transpose() / tau;
  const Vector lse_r = logsumexp_rows(S);
  const Vector lse_c = logsumexp_rows(S.transpose());
  const double diag = S.diagonal().sum();
  const double loss = 0.5 * ((lse_r.sum() - diag) + (lse_c.sum() - diag)) / static_cast<double>(B);
  if (dA && weight != 0.0) {
    Matrix soft_r = (S.colwise() - lse_r).array().exp().matrix();
    Matrix soft_c = (S.rowwise() - lse_c.transpose()).array().exp().matrix();
    Matrix dS = soft_r + soft_c;
    dS.diagonal().array() -= 2.0;
    dS *= weight * 0.5 / static_cast<double>(B);
    *dA += dS * T / tau;
    *dT += dS.transpose() * A / tau;
    *dlog_tau -= dS.cwiseProduct(S).sum();
  }
  return loss;
}

struct TermWeights {
  double align = 1.0;
  std::vector<double> align_prefix;
  double retention = 0.0;
  Matrix alpha;
  double rank = 0.0;
  double invariance = 0.0;
  std::array<double, kNumNegTypes> margins{};
  std::array<double, kNumNegTypes> tolerances{};
  std::array<bool, kNumNegTypes> enabled{true, true, true, true, true, true};
};

// Align, retention, rank and invariance on stacked z-rows (kMembers blocks of
// B rows). Values are unweighted sums; gradients carry the outer weights.
LossTerms prefix_terms(const Matrix& Z, Eigen::Index B, const InterfaceContract& contract, const Vector& log_tau,
                       const TermWeights& w, Matrix* dZ, Vector* dlog_tau) {
  LossTerms terms;
  const bool grad = dZ != nullptr;
  for (std::size_t p = 0; p < contract.size(); ++p) {
    const int k = contract.prefixes[p];
    const Prefixed pre = normalize_prefix(Z, k);
    Matrix dP;
    if (grad) dP = Matrix::Zero(pre.P.rows(), pre.P.cols());
    const auto block = [&](int slot) { return Matrix(pre.P.middleRows(slot * B, B)); };
    const auto add = [&](int slot, const Matrix& d) { dP.middleRows(slot * B, B) += d; };
    const Matrix img = block(image_slot());
    const double lt = log_tau(static_cast<Eigen::Index>(p));
    double dlt = 0.0;

    const auto contrastive = [&](ViewLevel v, double weight) {
      const Matrix txt = block(view_slot(v));
      Matrix d_img, d_txt;
      if (grad) {
        d_img = Matrix::Zero(B, k);
        d_txt = Matrix::Zero(B, k);
      }
      const double value = info_nce(img, txt, lt, weight, grad ? &d_img : nullptr, grad ? &d_txt : nullptr, &dlt);
      if (grad && weight != 0.0) {
        add(image_slot(), d_img);
        add(view_slot(v), d_txt);
      }
      return value;
    };

    const double pw = w.align_prefix.empty() ? 1.0 : w.align_prefix[p];
    if (pw != 0.0) terms.align += pw * contrastive(contract.views[p], w.align * pw);

    for (int l = 0; l < index(contract.views[p]); ++l) {
      const double a = w.alpha(static_cast<Eigen::Index>(p), l);
      if (a != 0.0) terms.retention += a * contrastive(static_cast<ViewLevel>(l), w.retention * a);
    }

    for (NegType r : kAllNegTypes) {
      const int ri = index(r);
      if (!w.enabled[static_cast<std::size_t>(ri)]) continue;
      const bool rank_side = k >= contract.kappa_of(r);
      const int pos_slot = view_slot(positive_view(r));
      const int neg_slot = negative_slot(r);
      const Matrix pos = block(pos_slot);
      const Matrix neg = block(neg_slot);
      const Vector gap = img.cwiseProduct(pos).rowwise().sum() - img.cwiseProduct(neg).rowwise().sum();
      Vector dgap = Vector::Zero(B);
      double value = 0.0;
      for (Eigen::Index i = 0; i < B; ++i) {
        if (rank_side) {
          const double h = w.margins[static_cast<std::size_t>(ri)] - gap(i);
          if (h > 0) {
            value += h;
            dgap(i) = -1.0;
          }
        } else {
          const double h = std::abs(gap(i)) - w.tolerances[static_cast<std::size_t>(ri)];
          if (h > 0) {
            value += h;
            dgap(i) = gap(i) > 0 ? 1.0 : -1.0;
          }
        }
      }
      value /= static_cast<double>(B);
      const double outer = rank_side ? w.rank : w.invariance;
      (rank_side ? terms.rank : terms.invariance) += value;
      if (grad && outer != 0.0) {
        const Vector c = dgap * (outer / static_cast<double>(B));
        add(image_slot(), c.asDiagonal() * (pos - neg));
        add(pos_slot, c.asDiagonal() * img);
        add(neg_slot, -(c.asDiagonal() * img));
      }
    }

    if (grad) {
      normalize_backward(pre, dP, *dZ);
      (*dlog_tau)(static_cast<Eigen::Index>(p)) += dlt;
    }
  }
  return terms;
}

double preservation(const Matrix& raw, const Matrix& Z, double weight, Matrix* dZ) {
  const Eigen::Index n = raw.rows();
  if (Z.rows() != n || Z.cols() != raw.cols()) throw Error(ErrorCode::kDimMismatch, "row sets differ in shape");
  if (n < 2) return 0.0;
  const Prefixed e = normalize_prefix(raw, static_cast<int>(raw.cols()));
  const Prefixed z = normalize_prefix(Z, static_cast<int>(Z.cols()));
  Matrix delta = z.P * z.P.transpose() - e.P * e.P.transpose();
  delta.diagonal().setZero();
  const double npairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  const double value = 0.5 * delta.squaredNorm() / npairs;
  if (dZ && weight != 0.0) {
    const Matrix dP = (2.0 * weight / npairs) * delta * z.P;
    normalize_backward(z, dP, *dZ);
  }
  return value;
}

Matrix vstack(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() + b.rows(), a.cols());
  out << a, b;
  return out;
}

void require_finite_nonneg(double v, const char* name) {
  if (!std::isfinite(v) || v < 0) throw Error(ErrorCode::kConfig, std::string(name) + " must be finite and >= 0");
}

}  // namespace

// ---------------------------------------------------------------- config / batch

Matrix LossConfig::retention_weights(const InterfaceContract& contract) const {
  const auto K = static_cast<Eigen::Index>(contract.size());
  if (retention.size() != 0) {
    if (retention.rows() != K || retention.cols() != kNumViews) {
      throw Error(ErrorCode::kConfig, "retention weights must be |K| x 4");
    }
    return retention;
  }
  Matrix alpha = Matrix::Zero(K, kNumViews);
  for (Eigen::Index p = 0; p < K; ++p) {
    const int g = index(contract.views[static_cast<std::size_t>(p)]);
    for (int l = 0; l < g; ++l) alpha(p, l) = 0.25 * std::pow(2.0, -(g - l - 1));
  }
  return alpha;
}

void LossConfig::validate(const InterfaceContract& contract) const {
  require_finite_nonneg(align_weight, "align_weight");
  require_finite_nonneg(lambda_ret, "lambda_ret");
  require_finite_nonneg(lambda_rank, "lambda_rank");
  require_finite_nonneg(lambda_inv, "lambda_inv");
  require_finite_nonneg(lambda_pres, "lambda_pres");
  require_finite_nonneg(lambda_ortho, "lambda_ortho");
  for (double m : margins) require_finite_nonneg(m, "margin");
  for (double e : tolerances) require_finite_nonneg(e, "tolerance");
  if (!align_prefix_weights.empty()) {
    if (align_prefix_weights.size() != contract.size()) {
      throw Error(ErrorCode::kConfig, "align_prefix_weights needs one entry per prefix");
    }
    for (double v : align_prefix_weights) require_finite_nonneg(v, "align prefix weight");
  }
  const Matrix alpha = retention_weights(contract);
  for (Eigen::Index p = 0; p < alpha.rows(); ++p) {
    const int g = index(contract.views[static_cast<std::size_t>(p)]);
    for (int l = 0; l < kNumViews; ++l) {
      require_finite_nonneg(alpha(p, l), "retention weight");
      if (l >= g && alpha(p, l) != 0.0) {
        throw Error(ErrorCode::kConfig, "retention weight set for a view that is not coarser than the prefix view");
      }
    }
  }
}

Batch Batch::gather(const EmbeddingCache& cache, std::span<const std::size_t> rows) {
  const auto take = [&](const MatrixF& m) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i])).cast<double>();
    }
    return out;
  };
  Batch b;
  b.image = take(cache.image);
  for (int v = 0; v < kNumViews; ++v) b.views[v] = take(cache.text[v]);
  for (int t = 0; t < kNumNegTypes; ++t) b.negatives[t] = take(cache.negatives[t]);
  return b;
}

Matrix Batch::stacked() const {
  const Eigen::Index B = size();
  Matrix out(B * kMembers, image.cols());
  out.middleRows(0, B) = image;
  for (int v = 0; v < kNumViews; ++v) {
    if (views[v].rows() != B || views[v].cols() != image.cols()) throw Error(ErrorCode::kShapeMismatch, "batch views misaligned");
    out.middleRows((1 + v) * B, B) = views[v];
  }
  for (int t = 0; t < kNumNegTypes; ++t) {
    if (negatives[t].rows() != B || negatives[t].cols() != image.cols()) {
      throw Error(ErrorCode::kShapeMismatch, "batch negatives misaligned");
    }
    out.middleRows((1 + kNumViews + t) * B, B) = negatives[t];
  }
  return out;
}

Batch Batch::unstack(const Matrix& stacked, Eigen::Index batch_size) {
  if (stacked.rows() != batch_size * kMembers) throw Error(ErrorCode::kShapeMismatch, "stacked rows do not match batch size");
  Batch b;
  b.image = stacked.middleRows(0, batch_size);
  for (int v = 0; v < kNumViews; ++v) b.views[v] = stacked.middleRows((1 + v) * batch_size, batch_size);
  for (int t = 0; t < kNumNegTypes; ++t) {
    b.negatives[t] = stacked.middleRows((1 + kNumViews + t) * batch_size, batch_size);
  }
  return b;
}

Batch Batch::transformed(const Transform& t) const { return unstack(t.apply(stacked()), size()); }

// ---------------------------------------------------------------- individual terms

double loss_align(const Batch& z, const InterfaceContract& contract, const Vector& log_temperatures,
                  const std::vector<double>& prefix_weights) {
  TermWeights w;
  w.align_prefix = prefix_weights;
  w.alpha = Matrix::Zero(static_cast<Eigen::Index>(contract.size()), kNumViews);
  w.enabled.fill(false);
  return prefix_terms(z.stacked(), z.size(), contract, log_temperatures, w, nullptr, nullptr).align;
}

double loss_retention(const Batch& z, const InterfaceContract& contract, const Vector& log_temperatures,
                      const Matrix& alpha) {
  TermWeights w;
  w.align_prefix.assign(contract.size(), 0.0);
  w.alpha = alpha;
  w.enabled.fill(false);
  return prefix_terms(z.stacked(), z.size(), contract, log_temperatures, w, nullptr, nullptr).retention;
}

double loss_rank(const Batch& z, const InterfaceContract& contract, const std::array<double, kNumNegTypes>& margins,
                 const std::array<bool, kNumNegTypes>& enabled) {
  TermWeights w;
  w.align_prefix.assign(contract.size(), 0.0);
  w.alpha = Matrix::Zero(static_cast<Eigen::Index>(contract.size()), kNumViews);
  w.margins = margins;
  w.enabled = enabled;
  const Vector lt = Vector::Zero(static_cast<Eigen::Index>(contract.size()));
  return prefix_terms(z.stacked(), z.size(), contract, lt, w, nullptr, nullptr).rank;
}

double loss_invariance(const Batch& z, const InterfaceContract& contract,
                       const std::array<double, kNumNegTypes>& tolerances,
                       const std::array<bool, kNumNegTypes>& enabled) {
  TermWeights w;
  w.align_prefix.assign(contract.size(), 0.0);
  w.alpha = Matrix::Zero(static_cast<Eigen::Index>(contract.size()), kNumViews);
  w.tolerances = tolerances;
  w.enabled = enabled;
  const Vector lt = Vector::Zero(static_cast<Eigen::Index>(contract.size()));
  return prefix_terms(z.stacked(), z.size(), contract, lt, w, nullptr, nullptr).invariance;
}

double loss_preservation(const Matrix& raw_rows, const Matrix& transformed_rows) {
  return preservation(raw_rows, transformed_rows, 0.0, nullptr);
}

double ortho_penalty(const Matrix& W) {
  const double D = static_cast<double>(W.cols());
  return (W.transpose() * W - Matrix::Identity(W.cols(), W.cols())).squaredNorm() / (D * D);
}

// ---------------------------------------------------------------- total

LossResult total_loss_and_gradient(const TransformModel& model, const Batch& batch, const InterfaceContract& contract,
                                   const LossConfig& config, bool with_gradient) {
  contract.validate();
  config.validate(contract);
  if (batch.size() < 1) throw Error(ErrorCode::kShapeMismatch, "empty batch");
  if (batch.image.cols() != model.dim() || contract.dim != model.dim()) {
    throw Error(ErrorCode::kDimMismatch, "batch, contract and transform dimensions differ");
  }
  const Vector& log_tau = model.params().log_temperatures;
  if (log_tau.size() != static_cast<Eigen::Index>(contract.size())) {
    throw Error(ErrorCode::kDimMismatch, "one temperature per prefix is required");
  }

  const Eigen::Index B = batch.size();
  const Matrix X = batch.stacked();
  TransformModel::Tape tape;
  const Matrix Z = model.forward(X, tape);

  TermWeights w;
  w.align = config.align_weight;
  w.align_prefix = config.align_prefix_weights;
  w.retention = config.lambda_ret;
  w.alpha = config.retention_weights(contract);
  w.rank = config.lambda_rank;
  w.invariance = config.lambda_inv;
  w.margins = config.margins;
  w.tolerances = config.tolerances;
  w.enabled = config.enabled_types;

  LossResult out;
  Matrix dZ;
  Vector dlog_tau;
  if (with_gradient) {
    dZ = Matrix::Zero(Z.rows(), Z.cols());
    dlog_tau = Vector::Zero(log_tau.size());
  }
  out.terms = prefix_terms(Z, B, contract, log_tau, w, with_gradient ? &dZ : nullptr,
                           with_gradient ? &dlog_tau : nullptr);

  // Preservation over image and full-caption rows.
  const int g3 = view_slot(ViewLevel::kG3);
  const Matrix raw_sel = vstack(X.middleRows(0, B), X.middleRows(g3 * B, B));
  const Matrix z_sel = vstack(Z.middleRows(0, B), Z.middleRows(g3 * B, B));
  Matrix dz_sel;
  if (with_gradient) dz_sel = Matrix::Zero(z_sel.rows(), z_sel.cols());
  out.terms.preservation = preservation(raw_sel, z_sel, config.lambda_pres, with_gradient ? &dz_sel : nullptr);
  if (with_gradient) {
    dZ.middleRows(0, B) += dz_sel.topRows(B);
    dZ.middleRows(g3 * B, B) += dz_sel.bottomRows(B);
  }

  Matrix grad_W;
  if (model.unconstrained_linear()) {
    const Matrix& W = tape.W;
    const double D = static_cast<double>(W.cols());
    const Matrix E = W.transpose() * W - Matrix::Identity(W.cols(), W.cols());
    out.terms.ortho = E.squaredNorm() / (D * D);
    if (with_gradient) grad_W = (4.0 * config.lambda_ortho / (D * D)) * W * E;
  }

  const LossTerms& t = out.terms;
  out.terms.total = config.align_weight * t.align + config.lambda_ret * t.retention + config.lambda_rank * t.rank +
                    config.lambda_inv * t.invariance + config.lambda_pres * t.preservation +
                    config.lambda_ortho * t.ortho;
  if (!std::isfinite(out.terms.total)) throw Error(ErrorCode::kNonfiniteLoss, "loss is not finite");

  if (with_gradient) {
    out.gradient = model.params().zeros_like();
    model.backward(tape, X, dZ, grad_W.size() ? &grad_W : nullptr, out.gradient);
    out.gradient.log_temperatures = dlog_tau;
  }
  return out;
}

// ---------------------------------------------------------------- finite differences

namespace {

GradCheckReport check_coordinates(const Objective& f, const Vector& x, double step,
                                  const std::vector<Eigen::Index>& coords) {
  if (!(step > 0)) throw Error(ErrorCode::kConfig, "finite-difference step must be > 0");
  Vector analytic(x.size());
  f(x, &analytic);
  GradCheckReport report;
  Vector probe = x;
  for (Eigen::Index i : coords) {
    probe(i) = x(i) + step;
    const double up = f(probe, nullptr);
    probe(i) = x(i) - step;
    const double down = f(probe, nullptr);
    probe(i) = x(i);
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(analytic(i)), std::abs(numeric), 1e-8});
    report.max_relative_error = std::max(report.max_relative_error, std::abs(analytic(i) - numeric) / denom);
    ++report.coordinates_checked;
  }
  return report;
}

}  // namespace

GradCheckReport finite_difference_check(const Objective& f, const Vector& x, double step) {
  std::vector<Eigen::Index> coords(static_cast<std::size_t>(x.size()));
  std::iota(coords.begin(), coords.end(), Eigen::Index{0});
  return check_coordinates(f, x, step, coords);
}

GradCheckReport finite_difference_check(const TransformModel& model, const Batch& batch,
                                        const InterfaceContract& contract, const LossConfig& config, double step,
                                        std::uint64_t seed, std::size_t min_subset) {
  TransformModel probe = model;
  const Objective f = [&](const Vector& x, Vector* gradient) {
    probe.params().assign(x);
    LossResult r = total_loss_and_gradient(probe, batch, contract, config, gradient != nullptr);
    if (gradient) *gradient = r.gradient.flatten();
    return r.terms.total;
  };
  const Vector x = model.params().flatten();
  std::vector<Eigen::Index> coords(static_cast<std::size_t>(x.size()));
  std::iota(coords.begin(), coords.end(), Eigen::Index{0});
  if (model.dim() > 16 && coords.size() > min_subset) {
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(min_subset);
    std::sort(coords.begin(), coords.end());
  }
  return check_coordinates(f, x, step, coords);
}

}  // namespace grasp
