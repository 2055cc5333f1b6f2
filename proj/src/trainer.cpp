#include "grasp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <string>

namespace grasp {

namespace {

constexpr std::array<std::array<bool, kNumNegTypes>, 4> kGroups = {{
    {true, false, false, false, false, false},
    {false, true, false, false, false, false},
    {false, false, true, true, true, false},
    {false, false, false, false, false, true},
}};

std::array<bool, kNumNegTypes> unlock(int groups) {
  std::array<bool, kNumNegTypes> mask{};
  for (int g = 0; g < std::min(groups, 4); ++g)
    for (int t = 0; t < kNumNegTypes; ++t) mask[t] = mask[t] || kGroups[g][t];
  return mask;
}

std::string mask_string(const std::array<bool, kNumNegTypes>& mask) {
  std::string s;
  for (NegType t : kAllNegTypes) {
    if (!mask[static_cast<std::size_t>(index(t))]) continue;
    if (!s.empty()) s += ",";
    s += to_string(t);
  }
  return s.empty() ? "-" : s;
}

void accumulate(LossTerms& sum, const LossTerms& t, double w) {
  sum.align += w * t.align;
  sum.retention += w * t.retention;
  sum.rank += w * t.rank;
  sum.invariance += w * t.invariance;
  sum.preservation += w * t.preservation;
  sum.ortho += w * t.ortho;
  sum.total += w * t.total;
}

}  // namespace

std::string_view to_string(Curriculum c) {
  switch (c) {
    case Curriculum::kDefault: return "default";
    case Curriculum::kAllAfterWarmup: return "all_after_warmup";
    case Curriculum::kSlow: return "slow";
    case Curriculum::kNone: return "none";
  }
  return "default";
}

Curriculum parse_curriculum(std::string_view s) {
  for (Curriculum c : {Curriculum::kDefault, Curriculum::kAllAfterWarmup, Curriculum::kSlow, Curriculum::kNone}) {
    if (to_string(c) == s) return c;
  }
  throw Error(ErrorCode::kConfig, "unknown curriculum '" + std::string(s) + "'");
}

std::array<bool, kNumNegTypes> curriculum_mask(Curriculum c, int warmup_epochs, int epoch) {
  if (c == Curriculum::kNone) return unlock(4);
  if (epoch < warmup_epochs) return unlock(0);
  const int after = epoch - warmup_epochs;
  switch (c) {
    case Curriculum::kAllAfterWarmup: return unlock(4);
    case Curriculum::kSlow: return unlock(after / 2 + 1);
    default: return unlock(after + 1);
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorCode::kConfig, "epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::kConfig, "batch_size must be >= 1");
  if (!(lr_transform > 0) || !(lr_temperature >= 0)) throw Error(ErrorCode::kConfig, "step sizes must be positive");
  if (!(init_temperature > 0)) throw Error(ErrorCode::kConfig, "init_temperature must be > 0");
  if (warmup_epochs < 0) throw Error(ErrorCode::kConfig, "warmup_epochs must be >= 0");
  if (!(drift_gate > 0)) throw Error(ErrorCode::kConfig, "drift_gate must be > 0");
  contract.validate();
  loss.validate(contract);
  if (selection_contract) {
    selection_contract->validate();
    if (selection_contract->dim != contract.dim) throw Error(ErrorCode::kConfig, "selection contract dimension differs");
  }
}

std::size_t select_checkpoint(const std::vector<CheckpointCandidate>& candidates, double drift_gate) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (!(c.drift <= drift_gate)) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = candidates[*best];
    if (c.stair > b.stair || (c.stair == b.stair && c.epoch < b.epoch)) best = i;
  }
  if (!best) throw Error(ErrorCode::kNoValidCheckpoint, "every candidate exceeds the drift gate");
  return *best;
}

// ---------------------------------------------------------------- Adam

Adam::Adam(const ParamSet& shape, double lr_transform, double lr_temperature, double beta1, double beta2, double eps)
    : m_(shape.zeros_like()),
      v_(shape.zeros_like()),
      lr_transform_(lr_transform),
      lr_temperature_(lr_temperature),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {}

void Adam::step(ParamSet& params, const ParamSet& grad) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const auto update = [&](auto& p, const auto& g, auto& m, auto& v, double lr) {
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseAbs2();
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  };
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    update(params.blocks[b].value, grad.blocks[b].value, m_.blocks[b].value, v_.blocks[b].value, lr_transform_);
  }
  update(params.log_temperatures, grad.log_temperatures, m_.log_temperatures, v_.log_temperatures, lr_temperature_);
}

// ---------------------------------------------------------------- validation

ValidationScore validation_score(const EmbeddingCache& cache, const Transform& transform,
                                 const InterfaceContract& contract, std::size_t drift_rows_limit) {
  const auto val = cache.rows_in(Split::kVal);
  if (val.empty()) throw Error(ErrorCode::kMissingSplit, "cache has no validation rows");
  std::vector<std::string> ids;
  ids.reserve(val.size());
  for (std::size_t r : val) ids.push_back(cache.ids[r]);
  const Evaluator ev(cache, transform);
  std::array<double, 4> recall{};
  for (int v = 0; v < kNumViews; ++v) {
    const auto view = static_cast<ViewLevel>(v);
    const auto k = contract.assigned_prefix(view);
    if (!k) throw Error(ErrorCode::kMissingCell, "no prefix assigned to " + std::string(to_string(view)));
    recall[static_cast<std::size_t>(v)] = ev.recall_at_1(val, build_pool(cache, PoolMode::kCustom, view, ids), *k);
  }
  ValidationScore out;
  out.staircase = staircase(recall, hard_cells(ev.sel_table(val, contract.prefixes), contract));
  const MatrixF rows = drift_rows(cache, val, drift_rows_limit);
  out.drift = full_drift(rows, transform.apply(rows)).max_abs;
  return out;
}

// ---------------------------------------------------------------- training

Checkpoint train(const TrainConfig& config, const EmbeddingCache& cache, std::ostream* log) {
  config.validate();
  if (config.contract.dim != cache.dim) throw Error(ErrorCode::kDimMismatch, "contract and cache dimensions differ");
  const auto train_rows = cache.rows_in(Split::kTrain);
  if (train_rows.empty()) throw Error(ErrorCode::kMissingSplit, "cache has no training rows");
  if (cache.rows_in(Split::kVal).empty()) throw Error(ErrorCode::kMissingSplit, "cache has no validation rows");

  TransformModel model = TransformModel::initialize(config.transform, cache.dim,
                                                    static_cast<int>(config.contract.size()), config.seed,
                                                    config.init_temperature);
  Adam adam(model.params(), config.lr_transform, config.lr_temperature);

  std::vector<ParamSet> snapshots;
  std::vector<CheckpointCandidate> candidates;
  std::vector<EpochRecord> trace;
  std::vector<std::size_t> order = train_rows;
  const auto B = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    LossConfig loss = config.loss;
    loss.enabled_types = curriculum_mask(config.curriculum, config.warmup_epochs, epoch);
    order = train_rows;
    std::mt19937_64 rng(config.seed + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.enabled = loss.enabled_types;
    for (std::size_t start = 0; start < order.size(); start += B) {
      const std::size_t len = std::min(B, order.size() - start);
      const Batch batch = Batch::gather(cache, std::span<const std::size_t>(order.data() + start, len));
      LossResult r;
      try {
        r = total_loss_and_gradient(model, batch, config.contract, loss);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kNonfiniteLoss) {
          throw Error(ErrorCode::kDiverged, "non-finite loss at epoch " + std::to_string(epoch));
        }
        throw;
      }
      accumulate(rec.terms, r.terms, static_cast<double>(len) / static_cast<double>(order.size()));
      adam.step(model.params(), r.gradient);
      if (!model.params().all_finite()) {
        throw Error(ErrorCode::kDiverged, "non-finite parameters at epoch " + std::to_string(epoch));
      }
    }

    const ValidationScore val =
        validation_score(cache, model.evaluation_transform(), config.scoring_contract(), config.drift_rows);
    rec.val_stair = val.staircase.stair;
    rec.val_hard_avg = val.staircase.hard_avg;
    rec.val_drift = val.drift;
    trace.push_back(rec);
    candidates.push_back({epoch, val.staircase.stair, val.drift});
    snapshots.push_back(model.params());

    if (log) {
      char line[320];
      std::snprintf(line, sizeof(line),
                    "epoch %d align=%.5f ret=%.5f rank=%.5f inv=%.5f pres=%.3e ortho=%.3e total=%.5f "
                    "val_stair=%.2f val_hard=%.2f drift=%.2e types=%s",
                    epoch, rec.terms.align, rec.terms.retention, rec.terms.rank, rec.terms.invariance,
                    rec.terms.preservation, rec.terms.ortho, rec.terms.total, rec.val_stair, rec.val_hard_avg,
                    rec.val_drift, mask_string(rec.enabled).c_str());
      *log << line << '\n' << std::flush;
    }
  }

  const std::size_t best = select_checkpoint(candidates, config.drift_gate);
  Checkpoint ck;
  ck.model = TransformModel(config.transform, cache.dim, snapshots[best]);
  ck.contract = config.contract;
  ck.epoch = candidates[best].epoch;
  ck.val_stair = candidates[best].stair;
  ck.val_drift = candidates[best].drift;
  ck.trace = std::move(trace);
  return ck;
}

}  // namespace grasp
