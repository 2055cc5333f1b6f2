#include "grasp/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <random>
#include <ostream>
#include <sstream>
#include <thread>

namespace grasp {

namespace {

const std::vector<std::string> kMethods = {
    "frozen_full",  "direct_prefix",      "pca_prefix",    "random_rotation",
    "mrl_style",    "matryoshka_adaptor", "smec_style",    "mlp_adapter",
    "learned_permutation", "learned_signed_permutation", "grasp_dense", "grasp_butterfly",
};

bool known(const std::string& name) { return std::find(kMethods.begin(), kMethods.end(), name) != kMethods.end(); }

// Runs jobs [0, n) on up to `threads` workers. Exceptions surface in job order.
template <typename F>
void parallel_jobs(std::size_t n, int threads, F&& job) {
  std::vector<std::exception_ptr> errors(n);
  const auto run = [&](std::size_t i) {
    try {
      job(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) run(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Per-job logs are buffered when jobs run concurrently and flushed in order.
struct JobLogs {
  JobLogs(std::size_t n, int threads, std::ostream* sink)
      : sink(sink), buffered(threads > 1 && n > 1), buffers(n) {}
  std::ostream* at(std::size_t i) {
    if (!sink) return nullptr;
    return buffered ? &buffers[i] : sink;
  }
  void flush() {
    if (!sink || !buffered) return;
    for (auto& b : buffers) *sink << b.str();
  }
  std::ostream* sink;
  bool buffered;
  std::vector<std::ostringstream> buffers;
};

Matrix train_rows_for_pca(const EmbeddingCache& cache) {
  const auto rows = cache.rows_in(Split::kTrain);
  if (rows.empty()) throw Error(ErrorCode::kMissingSplit, "cache has no training rows");
  Matrix out(static_cast<Eigen::Index>(2 * rows.size()), cache.dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows[i]);
    out.row(static_cast<Eigen::Index>(2 * i)) = cache.image.row(r).cast<double>();
    out.row(static_cast<Eigen::Index>(2 * i + 1)) = cache.text[index(ViewLevel::kG3)].row(r).cast<double>();
  }
  return out;
}

LossConfig without_typed_terms(LossConfig loss) {
  loss.lambda_rank = 0;
  loss.lambda_inv = 0;
  return loss;
}

}  // namespace

const std::vector<std::string>& method_names() { return kMethods; }

std::optional<TrainConfig> method_train_config(const std::string& name, const GridConfig& grid) {
  if (!known(name)) throw Error(ErrorCode::kUnknownMethod, "unknown method '" + name + "'");
  TrainConfig c = grid.train;
  if (name == "frozen_full" || name == "direct_prefix" || name == "pca_prefix" || name == "random_rotation") {
    return std::nullopt;
  }
  if (name == "mrl_style" || name == "matryoshka_adaptor") {
    c.transform.variant = name == "mrl_style" ? Variant::kDenseCayley : Variant::kLowRank;
    c.selection_contract = c.contract;
    c.contract = c.contract.with_uniform_view(ViewLevel::kG3);
    c.loss = without_typed_terms(c.loss);
    c.loss.lambda_ret = 0;
    c.loss.retention = Matrix();
    c.loss.align_prefix_weights.clear();
  } else if (name == "smec_style") {
    c.transform.variant = Variant::kDenseCayley;
    c.loss = without_typed_terms(c.loss);
  } else if (name == "mlp_adapter") {
    c.transform.variant = Variant::kMlp;
  } else if (name == "learned_permutation") {
    c.transform.variant = Variant::kPermutation;
  } else if (name == "learned_signed_permutation") {
    c.transform.variant = Variant::kSignedPermutation;
  } else if (name == "grasp_dense") {
    c.transform.variant = Variant::kDenseCayley;
  } else if (name == "grasp_butterfly") {
    c.transform.variant = Variant::kButterfly;
  }
  const TransformModel probe = TransformModel::initialize(c.transform, c.contract.dim, 1, 0);
  if (!probe.orthogonal_family()) c.drift_gate = std::max(c.drift_gate, grid.loose_drift_gate);
  return c;
}

MethodResult run_method(const std::string& name, const EmbeddingCache& cache, const GridConfig& grid,
                        std::ostream* log) {
  const InterfaceContract& contract = grid.train.contract;
  const std::optional<TrainConfig> cfg = method_train_config(name, grid);
  const int D = cache.dim;

  MethodResult out{{}, Transform::identity(D), std::nullopt, {}};
  out.row.name = name;
  if (cfg) {
    if (log) *log << "[" << name << "]\n";
    Checkpoint ck = train(*cfg, cache, log);
    out.transform = ck.model.evaluation_transform();
    out.row.params = param_count(cfg->transform, D, static_cast<int>(cfg->contract.size()));
    out.row.selected_epoch = ck.epoch;
    out.checkpoint = std::move(ck);
  } else if (name == "pca_prefix") {
    out.transform = Transform::from(fit_pca(train_rows_for_pca(cache)).projection);
  } else if (name == "random_rotation") {
    out.transform = Transform::from(random_orthogonal(D, grid.train.seed));
  }

  out.report = diagnose(cache, out.transform, contract, grid.eval);
  const DiagnosticReport& rep = out.report;
  const Eigen::Index last = static_cast<Eigen::Index>(contract.size()) - 1;
  const int g3 = index(ViewLevel::kG3);
  out.row.drift = rep.drift.max_abs;
  out.row.full_caption_r1 = rep.recall(last, g3);
  if (name == "frozen_full") {
    // Every cell at k = D.
    std::array<double, 4> recall{};
    for (int v = 0; v < kNumViews; ++v) recall[static_cast<std::size_t>(v)] = rep.recall(last, v);
    const std::array<double, 4> hard = {rep.sel.at(D, NegType::kObject), rep.sel.at(D, NegType::kAttribute),
                                        rep.sel.at(D, NegType::kRelation), rep.sel.at(D, NegType::kFull)};
    const Staircase s = staircase(recall, hard);
    out.row.stair = s.stair;
    out.row.hard_avg = s.hard_avg;
    out.row.caption_r1 = rep.recall(last, g3);
  } else {
    out.row.stair = rep.staircase.stair;
    out.row.hard_avg = rep.staircase.hard_avg;
    out.row.emergence_mean = rep.emergence.mean;
    out.row.caption_r1 = rep.recall(contract.position(*contract.assigned_prefix(ViewLevel::kG3)), g3);
  }
  return out;
}

std::vector<MethodRow> run_method_comparison(const EmbeddingCache& cache, const GridConfig& grid,
                                             const std::vector<std::string>& names, std::ostream* log) {
  const std::vector<std::string>& list = names.empty() ? kMethods : names;
  for (const auto& n : list)
    if (!known(n)) throw Error(ErrorCode::kUnknownMethod, "unknown method '" + n + "'");
  std::vector<MethodRow> rows(list.size());
  JobLogs logs(list.size(), grid.threads, log);
  parallel_jobs(list.size(), grid.threads,
                [&](std::size_t i) { rows[i] = run_method(list[i], cache, grid, logs.at(i)).row; });
  logs.flush();
  return rows;
}

// ---------------------------------------------------------------- kappa

std::vector<KappaVariant> default_kappa_variants(int dim) {
  const InterfaceContract base = InterfaceContract::ratio(dim);
  const auto rel_at = [](InterfaceContract c, int k) {
    for (NegType t : {NegType::kRelation, NegType::kAction, NegType::kOrder}) c = c.with_kappa(t, k);
    return c;
  };
  return {
      {"default", base},
      {"relation_delayed", rel_at(base, dim / 2)},
      {"attribute_delayed", base.with_kappa(NegType::kAttribute, dim / 4)},
      {"compressed", rel_at(base.with_kappa(NegType::kAttribute, dim / 8), dim / 8)},
  };
}

std::vector<KappaRow> run_kappa_sensitivity(const EmbeddingCache& cache, const GridConfig& grid,
                                            const std::vector<KappaVariant>& variants, std::ostream* log) {
  for (const auto& v : variants) v.contract.validate();
  std::vector<KappaRow> rows(variants.size());
  JobLogs logs(variants.size(), grid.threads, log);
  parallel_jobs(variants.size(), grid.threads, [&](std::size_t i) {
    const KappaVariant& v = variants[i];
    TrainConfig cfg = grid.train;
    cfg.contract = v.contract;
    if (std::ostream* l = logs.at(i)) *l << "[kappa " << v.name << "]\n";
    const Checkpoint ck = train(cfg, cache, logs.at(i));
    const Transform t = ck.model.evaluation_transform();
    const DiagnosticReport own = diagnose(cache, t, v.contract, grid.eval);
    const DiagnosticReport def = diagnose(cache, t, grid.train.contract, grid.eval);
    KappaRow& r = rows[i];
    r.name = v.name;
    r.attribute_kappa = v.contract.kappa_of(NegType::kAttribute);
    r.relation_kappa = v.contract.kappa_of(NegType::kRelation);
    r.contract_hard_avg = own.contract_hard_avg;
    r.leakage = own.leakage;
    r.default_stair = def.staircase.stair;
    r.hard_avg = own.staircase.hard_avg;
    r.caption_r1 = own.recall(own.contract.position(*own.contract.assigned_prefix(ViewLevel::kG3)), index(ViewLevel::kG3));
    r.drift = own.drift.max_abs;
  });
  logs.flush();
  return rows;
}

// ---------------------------------------------------------------- pool

std::vector<PoolRow> run_pool_sensitivity(const EmbeddingCache& cache, const Transform& transform,
                                          const InterfaceContract& contract, const std::vector<PoolMode>& pools,
                                          Split query_split) {
  contract.validate();
  const auto queries = cache.rows_in(query_split);
  if (queries.empty()) throw Error(ErrorCode::kMissingSplit, "no query rows");
  const Evaluator ev(cache, transform);
  const std::array<double, 4> hard = hard_cells(ev.sel_table(queries, contract.prefixes), contract);
  std::vector<PoolRow> rows;
  for (PoolMode mode : pools) {
    PoolRow row;
    row.pool = mode;
    row.hard = hard;
    for (int v = 0; v < kNumViews; ++v) {
      const auto view = static_cast<ViewLevel>(v);
      const auto k = contract.assigned_prefix(view);
      if (!k) throw Error(ErrorCode::kMissingCell, "no prefix assigned to " + std::string(to_string(view)));
      row.recall[static_cast<std::size_t>(v)] = ev.recall_at_1(queries, build_pool(cache, mode, view), *k);
    }
    row.staircase = staircase(row.recall, row.hard);
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------- gradient check

InterfaceContract gradcheck_contract(int dim) {
  if (dim >= 16 && dim % 16 == 0) return InterfaceContract::ratio(dim);
  if (dim < 8 || dim % 8 != 0) throw Error(ErrorCode::kConfig, "gradient check needs D divisible by 8");
  InterfaceContract c;
  c.dim = dim;
  c.prefixes = {dim / 4, 3 * dim / 8, dim / 2, 3 * dim / 4, dim};
  c.views = {ViewLevel::kG0, ViewLevel::kG1, ViewLevel::kG2, ViewLevel::kG3, ViewLevel::kG3};
  c.kappa = {dim / 4, 3 * dim / 8, dim / 2, dim / 2, dim / 2, 3 * dim / 4};
  c.validate();
  return c;
}

std::vector<GradCheckRow> run_gradcheck(int dim, std::uint64_t seed, int batch, double step) {
  if (batch < 2) throw Error(ErrorCode::kConfig, "gradient check needs batch >= 2");
  if (!(step > 0)) throw Error(ErrorCode::kConfig, "step must be > 0");
  const InterfaceContract contract = gradcheck_contract(dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto unit_rows = [&] {
    Matrix m(batch, dim);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    m.rowwise().normalize();
    return m;
  };
  Batch b;
  b.image = unit_rows();
  for (auto& v : b.views) v = unit_rows();
  for (auto& n : b.negatives) n = unit_rows();

  LossConfig none;
  none.align_weight = 0;
  none.lambda_ret = none.lambda_rank = none.lambda_inv = none.lambda_pres = none.lambda_ortho = 0;
  const auto only = [&](const std::string& term) {
    if (term == "total") return LossConfig{};
    LossConfig c = none;
    if (term == "align") c.align_weight = 1;
    if (term == "ret") c.lambda_ret = 1;
    if (term == "rank") c.lambda_rank = 1;
    if (term == "inv") c.lambda_inv = 1;
    if (term == "pres") c.lambda_pres = 10;
    if (term == "ortho") c.lambda_ortho = 1;
    return c;
  };

  struct Case {
    Variant variant;
    std::vector<std::string> terms;
  };
  std::vector<Case> cases = {
      {Variant::kDenseCayley, {"align", "ret", "rank", "inv", "pres", "total"}},
      {Variant::kPermutation, {"ortho", "total"}},
      {Variant::kSignedPermutation, {"total"}},
      {Variant::kLowRank, {"pres", "ortho", "total"}},
      {Variant::kMlp, {"pres", "total"}},
  };
  if ((dim & (dim - 1)) == 0) cases.insert(cases.begin() + 1, Case{Variant::kButterfly, {"total"}});

  std::vector<GradCheckRow> rows;
  for (const Case& c : cases) {
    TransformSpec spec;
    spec.variant = c.variant;
    spec.adaptor_rank = std::max(1, dim / 2);
    spec.butterfly_stacks = 2;
    TransformModel model = TransformModel::initialize(spec, dim, static_cast<int>(contract.size()), rng());
    for (auto& blk : model.params().blocks) {
      for (Eigen::Index i = 0; i < blk.value.size(); ++i) blk.value.data()[i] += 0.3 * normal(rng);
    }
    for (Eigen::Index i = 0; i < model.params().log_temperatures.size(); ++i) {
      model.params().log_temperatures(i) += 0.1 * normal(rng);
    }
    for (const auto& term : c.terms) {
      const GradCheckReport r = finite_difference_check(model, b, contract, only(term), step, seed);
      rows.push_back({std::string(to_string(c.variant)), term, r.max_relative_error, r.coordinates_checked});
    }
  }
  return rows;
}

// ---------------------------------------------------------------- cost

CostEstimate estimate_cost(int dim, std::uint64_t gallery, const std::vector<int>& prefixes, int precision_bytes) {
  if (dim < 1 || gallery < 1 || precision_bytes < 1 || prefixes.empty()) {
    throw Error(ErrorCode::kConfig, "cost inputs must be positive");
  }
  CostEstimate c;
  c.dim = dim;
  c.gallery = gallery;
  const double D = dim;
  c.query_ops = D * D;
  c.offline_ops = static_cast<double>(gallery) * c.query_ops;
  for (int k : prefixes) {
    if (k < 1 || k > dim) throw Error(ErrorCode::kConfig, "prefix out of range");
    c.storage_bytes.emplace_back(k, static_cast<double>(gallery) * k * precision_bytes);
  }
  c.params = static_cast<std::size_t>(dim) * static_cast<std::size_t>(dim) + prefixes.size();
  return c;
}

std::string format_count(double value, double unit, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f%s", value / unit, suffix);
  return buf;
}

std::vector<std::pair<std::string, std::string>> cost_table(const CostEstimate& c, int precision_bytes) {
  const auto storage = [&](int k) {
    return static_cast<double>(c.gallery) * k * precision_bytes;
  };
  const std::string prec = precision_bytes == 2 ? "fp16" : std::to_string(8 * precision_bytes) + "-bit";
  const std::string gallery = c.gallery % 1000000 == 0 ? std::to_string(c.gallery / 1000000) + "M"
                                                       : std::to_string(c.gallery);
  return {
      {"Query transform ops", format_count(c.query_ops, 1e6, "M")},
      {gallery + " offline transform ops", format_count(c.offline_ops, 1e12, "T")},
      {prec + " storage @ D/16", format_count(storage(c.dim / 16), 1e9, "GB")},
      {prec + " storage @ D/2", format_count(storage(c.dim / 2), 1e9, "GB")},
      {prec + " storage @ D", format_count(storage(c.dim), 1e9, "GB")},
      {"Dense transform params", format_count(static_cast<double>(c.params), 1e6, "M")},
  };
}

}  // namespace grasp
