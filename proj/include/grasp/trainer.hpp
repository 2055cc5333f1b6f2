#pragma once

#include "grasp/cache.hpp"
#include "grasp/contract.hpp"
#include "grasp/metrics.hpp"
#include "grasp/model.hpp"
#include "grasp/objective.hpp"

#include <iosfwd>
#include <vector>

namespace grasp {

enum class Curriculum { kDefault, kAllAfterWarmup, kSlow, kNone };
std::string_view to_string(Curriculum c);
Curriculum parse_curriculum(std::string_view s);  // throws kConfig

/// Negative types active at a zero-based epoch. Groups unlock in the order
/// object, attribute, relation/action/order, full.
std::array<bool, kNumNegTypes> curriculum_mask(Curriculum c, int warmup_epochs, int epoch);

struct TrainConfig {
  int epochs = 12;
  int batch_size = 256;
  std::uint64_t seed = 0;
  double lr_transform = 1e-3;
  double lr_temperature = 1e-3;
  double init_temperature = 0.07;
  Curriculum curriculum = Curriculum::kDefault;
  int warmup_epochs = 3;
  double drift_gate = 1e-5;
  std::size_t drift_rows = 2000;
  TransformSpec transform;
  LossConfig loss;
  InterfaceContract contract;
  /// Contract used to score validation checkpoints; defaults to `contract`.
  std::optional<InterfaceContract> selection_contract;

  const InterfaceContract& scoring_contract() const { return selection_contract ? *selection_contract : contract; }
  void validate() const;  // throws kConfig / kInvalidContract
};

struct EpochRecord {
  int epoch = 0;
  LossTerms terms;  // mean over the epoch's steps
  std::array<bool, kNumNegTypes> enabled{};
  double val_stair = 0;
  double val_hard_avg = 0;
  double val_drift = 0;
};

struct CheckpointCandidate {
  int epoch = 0;
  double stair = 0;
  double drift = 0;
};

/// Index of the candidate with the highest staircase among those with
/// drift <= gate; ties go to the earliest epoch. Throws kNoValidCheckpoint.
std::size_t select_checkpoint(const std::vector<CheckpointCandidate>& candidates, double drift_gate);

struct Checkpoint {
  TransformModel model;
  InterfaceContract contract;
  int epoch = 0;
  double val_stair = 0;
  double val_drift = 0;
  std::vector<EpochRecord> trace;
};

/// Adam with decays 0.9 / 0.999; transform blocks and log-temperatures use
/// separate step sizes.
class Adam {
 public:
  Adam(const ParamSet& shape, double lr_transform, double lr_temperature, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);
  void step(ParamSet& params, const ParamSet& grad);

 private:
  ParamSet m_, v_;
  double lr_transform_, lr_temperature_, beta1_, beta2_, eps_;
  long t_ = 0;
};

/// Staircase and drift of a transform on the validation split, with the
/// validation texts as the candidate pool.
struct ValidationScore {
  Staircase staircase;
  double drift = 0;
};
ValidationScore validation_score(const EmbeddingCache& cache, const Transform& transform,
                                 const InterfaceContract& contract, std::size_t drift_rows = 2000);

/// Trains on the train split and selects on the validation split. Writes one
/// progress line per epoch to `log` when given. Throws kDiverged,
/// kNoValidCheckpoint, kMissingSplit.
Checkpoint train(const TrainConfig& config, const EmbeddingCache& cache, std::ostream* log = nullptr);

}  // namespace grasp
