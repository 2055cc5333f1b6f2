#pragma once

#include "grasp/cache.hpp"
#include "grasp/contract.hpp"
#include "grasp/model.hpp"

#include <array>
#include <functional>
#include <span>
#include <vector>

namespace grasp {

/// Loss weights and per-type boundary constants.
struct LossConfig {
  double align_weight = 1.0;
  /// Per-prefix align multipliers; empty means 1 for every prefix.
  std::vector<double> align_prefix_weights;
  double lambda_ret = 0.5;
  double lambda_rank = 1.0;
  double lambda_inv = 0.5;
  double lambda_pres = 10.0;
  double lambda_ortho = 1.0;
  /// Explicit retention weights, |K| x 4 (prefix position, coarser view).
  /// Empty means the default 0.25 * 2^-(gap-1) rule.
  Matrix retention;
  std::array<double, kNumNegTypes> margins{0.1, 0.1, 0.1, 0.1, 0.1, 0.1};
  std::array<double, kNumNegTypes> tolerances{0.05, 0.05, 0.05, 0.05, 0.05, 0.05};
  /// Curriculum gate: disabled types contribute to neither rank nor invariance.
  std::array<bool, kNumNegTypes> enabled_types{true, true, true, true, true, true};

  /// Resolved |K| x 4 retention matrix; zero wherever the view is not coarser
  /// than the prefix's assigned view.
  Matrix retention_weights(const InterfaceContract& contract) const;
  void validate(const InterfaceContract& contract) const;  // throws kConfig
};

/// Aligned rows for one minibatch: image, the four views, six typed negatives.
struct Batch {
  Matrix image;
  std::array<Matrix, kNumViews> views;
  std::array<Matrix, kNumNegTypes> negatives;

  Eigen::Index size() const { return image.rows(); }
  static Batch gather(const EmbeddingCache& cache, std::span<const std::size_t> rows);
  /// Every member stacked: image, G0..G3, negatives in NegType order.
  Matrix stacked() const;
  static Batch unstack(const Matrix& stacked, Eigen::Index batch_size);
  Batch transformed(const Transform& t) const;
};

struct LossTerms {
  double align = 0, retention = 0, rank = 0, invariance = 0, preservation = 0, ortho = 0;
  double total = 0;
};

struct LossResult {
  LossTerms terms;
  ParamSet gradient;
};

// Individual terms evaluated on an already transformed (z-space) batch.
double loss_align(const Batch& z, const InterfaceContract& contract, const Vector& log_temperatures,
                  const std::vector<double>& prefix_weights = {});
double loss_retention(const Batch& z, const InterfaceContract& contract, const Vector& log_temperatures,
                      const Matrix& alpha);
double loss_rank(const Batch& z, const InterfaceContract& contract,
                 const std::array<double, kNumNegTypes>& margins,
                 const std::array<bool, kNumNegTypes>& enabled = {true, true, true, true, true, true});
double loss_invariance(const Batch& z, const InterfaceContract& contract,
                       const std::array<double, kNumNegTypes>& tolerances,
                       const std::array<bool, kNumNegTypes>& enabled = {true, true, true, true, true, true});
/// Mean squared change of full-dimensional pairwise cosines over all pairs.
double loss_preservation(const Matrix& raw_rows, const Matrix& transformed_rows);
/// ||W^T W - I||_F^2 / D^2.
double ortho_penalty(const Matrix& W);

/// Weighted objective and its exact gradient with respect to every trainable
/// parameter and the log-temperatures.
LossResult total_loss_and_gradient(const TransformModel& model, const Batch& batch,
                                   const InterfaceContract& contract, const LossConfig& config,
                                   bool with_gradient = true);

struct GradCheckReport {
  double max_relative_error = 0;
  std::size_t coordinates_checked = 0;
};

/// Central differences on every coordinate, or a seeded subset of at least
/// `min_subset` coordinates when D > 16. Relative error uses
/// max(|analytic|, |numeric|, 1e-8) as denominator.
GradCheckReport finite_difference_check(const TransformModel& model, const Batch& batch,
                                        const InterfaceContract& contract, const LossConfig& config,
                                        double step, std::uint64_t seed = 0, std::size_t min_subset = 50);

/// Same check for an arbitrary objective returning its value and gradient.
using Objective = std::function<double(const Vector& x, Vector* gradient)>;
GradCheckReport finite_difference_check(const Objective& f, const Vector& x, double step);

}  // namespace grasp
