#include "grasp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <unordered_map>

namespace grasp {

namespace {

constexpr Eigen::Index kQueryChunk = 512;

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::vector<double> earlier_cells(const SelTable& sel, const InterfaceContract& contract, NegType t) {
  std::vector<double> out;
  for (int k : contract.prefixes) {
    if (k < contract.kappa_of(t)) out.push_back(sel.at(k, t));
  }
  return out;
}

template <typename Mat>
Mat rows_normalized(const Mat& m) {
  using Scalar = typename Mat::Scalar;
  Mat out = m;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const Scalar n = out.row(i).norm();
    if (n > Scalar(0)) out.row(i) /= n;
  }
  return out;
}

template <typename Mat>
Drift drift_impl(const Mat& original, const Mat& transformed, const DriftOptions& options) {
  if (original.rows() != transformed.rows() || original.cols() != transformed.cols()) {
    throw Error(ErrorCode::kDimMismatch, "drift needs matching row sets");
  }
  const Eigen::Index n = original.rows();
  Drift d;
  if (n < 2) return d;
  const Mat e = options.renormalize ? rows_normalized(original) : original;
  const Mat z = options.renormalize ? rows_normalized(transformed) : transformed;
  if (static_cast<std::size_t>(n) <= options.exhaustive_limit) {
    const Mat delta = z * z.transpose() - e * e.transpose();
    double best = 0;
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i <= j; ++i) best = std::max(best, static_cast<double>(std::abs(delta(i, j))));
    d.max_abs = best;
    d.pairs = static_cast<std::size_t>(n) * static_cast<std::size_t>(n + 1) / 2;
    return d;
  }
  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  double best = 0;
  for (std::size_t s = 0; s < options.sampled_pairs; ++s) {
    const Eigen::Index a = pick(rng), b = pick(rng);
    const auto change = z.row(a).dot(z.row(b)) - e.row(a).dot(e.row(b));
    best = std::max(best, static_cast<double>(std::abs(change)));
  }
  d.max_abs = best;
  d.pairs = options.sampled_pairs;
  d.exhaustive = false;
  return d;
}

MatrixF gather(const MatrixF& m, const std::vector<std::size_t>& rows) {
  MatrixF out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

std::vector<Eigen::Index> positions_in_pool(const std::vector<std::size_t>& query_rows, const CandidatePool& pool) {
  std::unordered_map<std::size_t, Eigen::Index> where;
  for (std::size_t j = 0; j < pool.rows.size(); ++j) where.emplace(pool.rows[j], static_cast<Eigen::Index>(j));
  std::vector<Eigen::Index> out;
  out.reserve(query_rows.size());
  for (std::size_t r : query_rows) {
    auto it = where.find(r);
    if (it == where.end()) throw Error(ErrorCode::kPositiveNotInPool, "query row " + std::to_string(r) + " has no positive in the pool");
    out.push_back(it->second);
  }
  return out;
}

}  // namespace

double SelTable::at(int prefix, NegType t) const {
  const auto it = std::find(prefixes.begin(), prefixes.end(), prefix);
  if (it == prefixes.end()) throw Error(ErrorCode::kMissingCell, "no Sel row for prefix " + std::to_string(prefix));
  return values(it - prefixes.begin(), index(t));
}

// ---------------------------------------------------------------- primitives

double recall_at_1(const Matrix& scores, const std::vector<Eigen::Index>& positive) {
  if (static_cast<std::size_t>(scores.rows()) != positive.size()) {
    throw Error(ErrorCode::kDimMismatch, "one positive per query is required");
  }
  if (scores.rows() == 0) throw Error(ErrorCode::kEmptySet, "no queries");
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const Eigen::Index p = positive[static_cast<std::size_t>(i)];
    if (p < 0 || p >= scores.cols()) throw Error(ErrorCode::kPositiveNotInPool, "positive index outside the pool");
    const double s = scores(i, p);
    bool strict = true;
    for (Eigen::Index j = 0; j < scores.cols() && strict; ++j) {
      if (j != p && scores(i, j) >= s) strict = false;
    }
    hits += strict ? 1 : 0;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(scores.rows());
}

double selectivity(const Vector& positive_scores, const Vector& negative_scores) {
  if (positive_scores.size() != negative_scores.size()) throw Error(ErrorCode::kDimMismatch, "score vectors differ in length");
  if (positive_scores.size() == 0) throw Error(ErrorCode::kEmptySet, "no pairs");
  const auto wins = (positive_scores.array() > negative_scores.array()).count();
  return 100.0 * static_cast<double>(wins) / static_cast<double>(positive_scores.size());
}

Matrix normalized_prefix(const MatrixF& rows, int k) {
  if (k <= 0 || k > rows.cols()) throw Error(ErrorCode::kDimMismatch, "prefix length out of range");
  Matrix p = rows.leftCols(k).cast<double>();
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double n = p.row(i).norm();
    if (n < 1e-12) throw Error(ErrorCode::kZeroPrefix, "row " + std::to_string(i) + " prefix norm below 1e-12");
    p.row(i) /= n;
  }
  return p;
}

Staircase staircase(const std::array<double, 4>& recall_cells, const std::array<double, 4>& hard_cells) {
  Staircase s;
  s.ret_avg = (recall_cells[0] + recall_cells[1] + recall_cells[2] + recall_cells[3]) / 4.0;
  s.hard_avg = (hard_cells[0] + hard_cells[1] + hard_cells[2] + hard_cells[3]) / 4.0;
  s.stair = 0.5 * (s.ret_avg + s.hard_avg);
  return s;
}

std::array<double, 4> hard_cells(const SelTable& sel, const InterfaceContract& contract) {
  constexpr std::array<NegType, 4> types{NegType::kObject, NegType::kAttribute, NegType::kRelation, NegType::kFull};
  std::array<double, 4> out{};
  for (int v = 0; v < kNumViews; ++v) {
    const auto k = contract.assigned_prefix(static_cast<ViewLevel>(v));
    if (!k) throw Error(ErrorCode::kMissingCell, "no prefix assigned to " + std::string(to_string(static_cast<ViewLevel>(v))));
    out[static_cast<std::size_t>(v)] = sel.at(*k, types[static_cast<std::size_t>(v)]);
  }
  return out;
}

double contract_hard_avg(const SelTable& sel, const InterfaceContract& contract) {
  const auto cell = [&](NegType t) { return sel.at(contract.kappa_of(t), t); };
  const double rao = (cell(NegType::kRelation) + cell(NegType::kAction) + cell(NegType::kOrder)) / 3.0;
  return (cell(NegType::kObject) + cell(NegType::kAttribute) + rao + cell(NegType::kFull)) / 4.0;
}

double emergence(const SelTable& sel, const InterfaceContract& contract, NegType t) {
  const auto earlier = earlier_cells(sel, contract, t);
  if (earlier.empty()) {
    throw Error(ErrorCode::kNoEarlierPrefix, std::string(to_string(t)) + " has no prefix before its boundary");
  }
  return sel.at(contract.kappa_of(t), t) - mean(earlier);
}

EmergenceSummary emergence_summary(const SelTable& sel, const InterfaceContract& contract) {
  EmergenceSummary out;
  std::vector<double> included;
  for (NegType t : kAllNegTypes) {
    if (earlier_cells(sel, contract, t).empty()) continue;
    const double e = emergence(sel, contract, t);
    out.per_type[static_cast<std::size_t>(index(t))] = e;
    included.push_back(e);
  }
  out.mean = included.empty() ? 0.0 : mean(included);
  return out;
}

EmergenceSummary emergence_delta(const SelTable& sel, const SelTable& baseline, const InterfaceContract& contract) {
  EmergenceSummary out;
  std::vector<double> included;
  for (NegType t : kAllNegTypes) {
    if (earlier_cells(sel, contract, t).empty()) continue;
    const int k = contract.kappa_of(t);
    const double e = sel.at(k, t) - baseline.at(k, t);
    out.per_type[static_cast<std::size_t>(index(t))] = e;
    included.push_back(e);
  }
  out.mean = included.empty() ? 0.0 : mean(included);
  return out;
}

double leakage(const SelTable& sel, const InterfaceContract& contract) {
  std::vector<double> cells;
  for (NegType t : kAllNegTypes) {
    const auto e = earlier_cells(sel, contract, t);
    cells.insert(cells.end(), e.begin(), e.end());
  }
  if (cells.empty()) throw Error(ErrorCode::kEmptySet, "no (prefix, type) cell lies before its boundary");
  return mean(cells);
}

Drift full_drift(const Matrix& original, const Matrix& transformed, const DriftOptions& options) {
  return drift_impl(original, transformed, options);
}

Drift full_drift(const MatrixF& original, const MatrixF& transformed, const DriftOptions& options) {
  return drift_impl(original, transformed, options);
}

RankStats rank_stats(const Matrix& scores, const std::vector<Eigen::Index>& positive,
                     const std::vector<int>& query_labels, const std::vector<int>& candidate_labels) {
  const Eigen::Index Q = scores.rows(), P = scores.cols();
  if (static_cast<std::size_t>(Q) != query_labels.size() || static_cast<std::size_t>(P) != candidate_labels.size() ||
      Q == 0 || P == 0) {
    throw Error(ErrorCode::kMissingLabels, "every query and candidate needs a label");
  }
  RankStats out;
  out.recall_at_1 = recall_at_1(scores, positive);
  std::vector<double> ranks;
  double purity = 0, ap_sum = 0, same_label = 0;
  std::size_t ap_count = 0;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(P));
  for (Eigen::Index i = 0; i < Q; ++i) {
    const int label = query_labels[static_cast<std::size_t>(i)];
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return scores(i, a) > scores(i, b); });

    const std::size_t top = std::min<std::size_t>(10, order.size());
    std::size_t match = 0;
    for (std::size_t j = 0; j < top; ++j) match += candidate_labels[static_cast<std::size_t>(order[j])] == label;
    purity += static_cast<double>(match) / static_cast<double>(top);

    std::size_t relevant = 0;
    double precision_sum = 0;
    for (std::size_t j = 0; j < order.size(); ++j) {
      if (candidate_labels[static_cast<std::size_t>(order[j])] == label) {
        ++relevant;
        precision_sum += static_cast<double>(relevant) / static_cast<double>(j + 1);
      }
    }
    if (relevant > 0) {
      ap_sum += precision_sum / static_cast<double>(relevant);
      ++ap_count;
    }

    const Eigen::Index p = positive[static_cast<std::size_t>(i)];
    const double s = scores(i, p);
    std::size_t rank = 1;
    for (Eigen::Index j = 0; j < P; ++j) rank += (j != p && scores(i, j) >= s) ? 1 : 0;
    ranks.push_back(static_cast<double>(rank));

    const double best = scores.row(i).maxCoeff();
    bool all_same = true;
    for (Eigen::Index j = 0; j < P && all_same; ++j) {
      if (scores(i, j) == best && candidate_labels[static_cast<std::size_t>(j)] != label) all_same = false;
    }
    same_label += all_same ? 1.0 : 0.0;
  }
  std::sort(ranks.begin(), ranks.end());
  const std::size_t m = ranks.size();
  out.median_rank = m % 2 ? ranks[m / 2] : 0.5 * (ranks[m / 2 - 1] + ranks[m / 2]);
  out.purity_at_10 = 100.0 * purity / static_cast<double>(Q);
  out.category_map = ap_count ? 100.0 * ap_sum / static_cast<double>(ap_count) : 0.0;
  out.same_label_recall_at_1 = 100.0 * same_label / static_cast<double>(Q);
  return out;
}

double zero_shot(const Matrix& image_prefix, const Matrix& class_prefix, const std::vector<int>& labels) {
  const Eigen::Index C = class_prefix.rows();
  if (C < 2) throw Error(ErrorCode::kEmptySet, "zero-shot needs at least two classes");
  if (static_cast<std::size_t>(image_prefix.rows()) != labels.size() || labels.empty()) {
    throw Error(ErrorCode::kMissingLabels, "one label per image is required");
  }
  const Matrix scores = image_prefix * class_prefix.transpose();
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= C) throw Error(ErrorCode::kMissingLabels, "label outside the class set");
    bool strict = true;
    for (Eigen::Index c = 0; c < C && strict; ++c) {
      if (c != y && scores(i, c) >= scores(i, y)) strict = false;
    }
    correct += strict ? 1 : 0;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(scores.rows());
}

double zero_shot(const Transform& transform, int k, const MatrixF& class_rows, const MatrixF& image_rows,
                 const std::vector<int>& labels) {
  return zero_shot(normalized_prefix(transform.apply(image_rows), k),
                   normalized_prefix(transform.apply(class_rows), k), labels);
}

// ---------------------------------------------------------------- Evaluator

Evaluator::Evaluator(const EmbeddingCache& cache, const Transform& transform) : cache_(&cache) {
  if (transform.dim() != cache.dim) throw Error(ErrorCode::kDimMismatch, "transform and cache dimensions differ");
  image_ = transform.apply(cache.image);
  for (int v = 0; v < kNumViews; ++v) text_[v] = transform.apply(cache.text[v]);
  for (int t = 0; t < kNumNegTypes; ++t) negatives_[t] = transform.apply(cache.negatives[t]);
}

double Evaluator::recall_at_1(const std::vector<std::size_t>& query_rows, const CandidatePool& pool, int k) const {
  const auto positive = positions_in_pool(query_rows, pool);
  const Matrix candidates = normalized_prefix(gather(view(pool.view_level), pool.rows), k);
  const Matrix queries = normalized_prefix(gather(image_, query_rows), k);
  double hits = 0;
  for (Eigen::Index start = 0; start < queries.rows(); start += kQueryChunk) {
    const Eigen::Index len = std::min(kQueryChunk, queries.rows() - start);
    const Matrix scores = queries.middleRows(start, len) * candidates.transpose();
    const std::vector<Eigen::Index> pos(positive.begin() + start, positive.begin() + start + len);
    hits += grasp::recall_at_1(scores, pos) * static_cast<double>(len) / 100.0;
  }
  if (queries.rows() == 0) throw Error(ErrorCode::kEmptySet, "no queries");
  return 100.0 * hits / static_cast<double>(queries.rows());
}

double Evaluator::selectivity(const std::vector<std::size_t>& query_rows, int k, NegType t) const {
  const Matrix img = normalized_prefix(gather(image_, query_rows), k);
  const Matrix pos = normalized_prefix(gather(view(positive_view(t)), query_rows), k);
  const Matrix neg = normalized_prefix(gather(negative(t), query_rows), k);
  return grasp::selectivity(img.cwiseProduct(pos).rowwise().sum(), img.cwiseProduct(neg).rowwise().sum());
}

SelTable Evaluator::sel_table(const std::vector<std::size_t>& query_rows, const std::vector<int>& prefixes) const {
  SelTable table;
  table.prefixes = prefixes;
  table.values.resize(static_cast<Eigen::Index>(prefixes.size()), kNumNegTypes);
  for (std::size_t p = 0; p < prefixes.size(); ++p) {
    for (NegType t : kAllNegTypes) {
      table.values(static_cast<Eigen::Index>(p), index(t)) = selectivity(query_rows, prefixes[p], t);
    }
  }
  return table;
}

RankStats Evaluator::rank_stats(const std::vector<std::size_t>& query_rows, const CandidatePool& pool, int k,
                                const std::vector<int>& row_labels) const {
  if (row_labels.size() != cache_->size()) throw Error(ErrorCode::kMissingLabels, "one label per cache row is required");
  const auto positive = positions_in_pool(query_rows, pool);
  const Matrix scores = normalized_prefix(gather(image_, query_rows), k) *
                        normalized_prefix(gather(view(pool.view_level), pool.rows), k).transpose();
  std::vector<int> ql, cl;
  for (std::size_t r : query_rows) ql.push_back(row_labels[r]);
  for (std::size_t r : pool.rows) cl.push_back(row_labels[r]);
  return grasp::rank_stats(scores, positive, ql, cl);
}

// ---------------------------------------------------------------- report

MatrixF drift_rows(const EmbeddingCache& cache, const std::vector<std::size_t>& rows, std::size_t limit) {
  const std::size_t take = std::min(rows.size(), (limit + 1) / 2);
  MatrixF out(static_cast<Eigen::Index>(2 * take), cache.dim);
  for (std::size_t i = 0; i < take; ++i) {
    out.row(static_cast<Eigen::Index>(i)) = cache.image.row(static_cast<Eigen::Index>(rows[i]));
    out.row(static_cast<Eigen::Index>(take + i)) = cache.view(ViewLevel::kG3).row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

DiagnosticReport diagnose(const EmbeddingCache& cache, const Transform& transform, const InterfaceContract& contract,
                          const DiagnosticOptions& options) {
  contract.validate();
  if (contract.dim != cache.dim) throw Error(ErrorCode::kDimMismatch, "contract and cache dimensions differ");
  const auto queries = cache.rows_in(options.query_split);
  if (queries.empty()) {
    throw Error(ErrorCode::kMissingSplit, "no rows in split " + std::string(to_string(options.query_split)));
  }
  const Evaluator ev(cache, transform);
  DiagnosticReport rep;
  rep.contract = contract;
  rep.recall.resize(static_cast<Eigen::Index>(contract.size()), kNumViews);
  std::array<CandidatePool, kNumViews> pools;
  for (int v = 0; v < kNumViews; ++v) {
    pools[v] = build_pool(cache, options.pool_mode, static_cast<ViewLevel>(v), options.custom_pool);
    for (std::size_t p = 0; p < contract.size(); ++p) {
      rep.recall(static_cast<Eigen::Index>(p), v) = ev.recall_at_1(queries, pools[v], contract.prefixes[p]);
    }
  }
  rep.sel = ev.sel_table(queries, contract.prefixes);
  std::array<double, 4> recall_cells{};
  for (int v = 0; v < kNumViews; ++v) {
    const auto k = contract.assigned_prefix(static_cast<ViewLevel>(v));
    if (!k) throw Error(ErrorCode::kMissingCell, "no prefix assigned to " + std::string(to_string(static_cast<ViewLevel>(v))));
    recall_cells[static_cast<std::size_t>(v)] = rep.recall(contract.position(*k), v);
  }
  rep.staircase = staircase(recall_cells, hard_cells(rep.sel, contract));
  rep.contract_hard_avg = contract_hard_avg(rep.sel, contract);
  try {
    rep.leakage = leakage(rep.sel, contract);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kEmptySet) throw;
  }
  rep.emergence = emergence_summary(rep.sel, contract);

  const MatrixF original = drift_rows(cache, queries, options.drift_rows);
  const MatrixF mapped = transform.apply(original);
  DriftOptions drift_opts;
  drift_opts.seed = options.seed;
  rep.drift = full_drift(original, mapped, drift_opts);
  drift_opts.renormalize = false;
  rep.drift_raw = full_drift(original, mapped, drift_opts);

  if (!options.labels.empty()) {
    const int k = options.rank_prefix > 0 ? options.rank_prefix : *contract.assigned_prefix(ViewLevel::kG3);
    rep.rank = ev.rank_stats(queries, pools[index(ViewLevel::kG3)], k, options.labels);
  }
  return rep;
}

}  // namespace grasp
