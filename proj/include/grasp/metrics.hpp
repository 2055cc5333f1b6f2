#pragma once

#include "grasp/cache.hpp"
#include "grasp/contract.hpp"
#include "grasp/model.hpp"

#include <array>
#include <optional>
#include <vector>

namespace grasp {

/// Sel(k, r) percentages; rows follow `prefixes`, columns NegType order.
struct SelTable {
  std::vector<int> prefixes;
  Matrix values;

  double at(int prefix, NegType t) const;  // throws kMissingCell
};

// ---------------------------------------------------------------- primitives

/// Percentage of queries (rows of `scores`) whose positive column scores
/// strictly above every other candidate. Throws kPositiveNotInPool for a
/// negative or out-of-range positive index.
double recall_at_1(const Matrix& scores, const std::vector<Eigen::Index>& positive);

/// Percentage of pairs with pos(i) > neg(i) strictly.
double selectivity(const Vector& positive_scores, const Vector& negative_scores);

/// Row-normalized k-prefixes of float rows, in double.
Matrix normalized_prefix(const MatrixF& rows, int k);

struct Staircase {
  double ret_avg = 0;
  double hard_avg = 0;
  double stair = 0;
};

/// RetAvg over the four assigned retrieval cells and HardAvg over the four
/// assigned hard-negative cells, both given in view order G0..G3.
Staircase staircase(const std::array<double, 4>& recall_cells, const std::array<double, 4>& hard_cells);

/// Hard-negative cells read from a SelTable at the prefix assigned to each
/// view: (G0, object), (G1, attribute), (G2, relation), (G3, full).
std::array<double, 4> hard_cells(const SelTable& sel, const InterfaceContract& contract);

/// mean(Sel(kappa(object)), Sel(kappa(attribute)), mean over relation/action/order
/// of Sel(kappa(r)), Sel(kappa(full))): each type scored at its own boundary.
double contract_hard_avg(const SelTable& sel, const InterfaceContract& contract);

/// Sel(kappa(r), r) - mean_{k < kappa(r)} Sel(k, r). Throws kNoEarlierPrefix.
double emergence(const SelTable& sel, const InterfaceContract& contract, NegType t);

struct EmergenceSummary {
  std::array<std::optional<double>, kNumNegTypes> per_type;  // empty when excluded
  double mean = 0;
};
EmergenceSummary emergence_summary(const SelTable& sel, const InterfaceContract& contract);

/// Emergence measured against a baseline table instead of earlier prefixes:
/// Sel(kappa(r), r) - baseline Sel(kappa(r), r).
EmergenceSummary emergence_delta(const SelTable& sel, const SelTable& baseline, const InterfaceContract& contract);

/// Mean of Sel(k, r) over {(k, r) : k < kappa(r)}. Throws kEmptySet.
double leakage(const SelTable& sel, const InterfaceContract& contract);

// ---------------------------------------------------------------- drift

struct Drift {
  double max_abs = 0;
  std::size_t pairs = 0;
  bool exhaustive = true;
};

struct DriftOptions {
  std::size_t exhaustive_limit = 2000;
  std::size_t sampled_pairs = 1000000;
  std::uint64_t seed = 0;
  bool renormalize = true;  // false: raw inner products of F(e)
};

/// max |<F(e_a), F(e_b)> - <e_a, e_b>| over pairs a <= b.
Drift full_drift(const Matrix& original, const Matrix& transformed, const DriftOptions& options = {});
/// Same in a 32-bit pipeline.
Drift full_drift(const MatrixF& original, const MatrixF& transformed, const DriftOptions& options = {});

// ---------------------------------------------------------------- rank statistics

struct RankStats {
  double purity_at_10 = 0;
  double category_map = 0;
  double median_rank = 0;
  double recall_at_1 = 0;
  double same_label_recall_at_1 = 0;
};

/// Ranking descends by score with ties broken by candidate order, except the
/// positive's rank, which is pessimistic: 1 + #{j != pos : s_j >= s_pos}.
RankStats rank_stats(const Matrix& scores, const std::vector<Eigen::Index>& positive,
                     const std::vector<int>& query_labels, const std::vector<int>& candidate_labels);

/// Top-1 accuracy of argmax over class rows; ties are misses. Throws kEmptySet
/// for fewer than two classes.
double zero_shot(const Matrix& image_prefix, const Matrix& class_prefix, const std::vector<int>& labels);
double zero_shot(const Transform& transform, int k, const MatrixF& class_rows, const MatrixF& image_rows,
                 const std::vector<int>& labels);

// ---------------------------------------------------------------- cache evaluation

/// A cache pushed through one transform in the 32-bit pipeline.
class Evaluator {
 public:
  Evaluator(const EmbeddingCache& cache, const Transform& transform);

  const EmbeddingCache& cache() const { return *cache_; }
  int dim() const { return cache_->dim; }
  const MatrixF& image() const { return image_; }
  const MatrixF& view(ViewLevel v) const { return text_[index(v)]; }
  const MatrixF& negative(NegType t) const { return negatives_[index(t)]; }

  /// R@1 for image queries against the pool's texts at prefix k.
  double recall_at_1(const std::vector<std::size_t>& query_rows, const CandidatePool& pool, int k) const;
  double selectivity(const std::vector<std::size_t>& query_rows, int k, NegType t) const;
  SelTable sel_table(const std::vector<std::size_t>& query_rows, const std::vector<int>& prefixes) const;
  RankStats rank_stats(const std::vector<std::size_t>& query_rows, const CandidatePool& pool, int k,
                       const std::vector<int>& row_labels) const;

 private:
  const EmbeddingCache* cache_;
  MatrixF image_;
  std::array<MatrixF, kNumViews> text_;
  std::array<MatrixF, kNumNegTypes> negatives_;
};

struct DiagnosticReport {
  InterfaceContract contract;
  /// R@1 per prefix (rows) and view (columns).
  Matrix recall;
  SelTable sel;
  Staircase staircase;
  double contract_hard_avg = 0;
  std::optional<double> leakage;
  EmergenceSummary emergence;
  Drift drift;        // renormalized, 32-bit
  Drift drift_raw;    // unnormalized, 32-bit
  std::optional<RankStats> rank;
};

struct DiagnosticOptions {
  PoolMode pool_mode = PoolMode::kFull;
  std::vector<std::string> custom_pool;
  Split query_split = Split::kTest;
  std::size_t drift_rows = 2000;  // image + full-caption rows of the query split
  std::uint64_t seed = 0;
  /// Per-row labels for rank statistics (e.g. object value); empty skips them.
  std::vector<int> labels;
  /// Prefix for rank statistics; 0 means the prefix assigned to G3.
  int rank_prefix = 0;
};

DiagnosticReport diagnose(const EmbeddingCache& cache, const Transform& transform, const InterfaceContract& contract,
                          const DiagnosticOptions& options = {});

/// Image and full-caption rows of the given cache rows, stacked (drift sample).
MatrixF drift_rows(const EmbeddingCache& cache, const std::vector<std::size_t>& rows, std::size_t limit);

}  // namespace grasp
