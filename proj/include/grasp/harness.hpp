#pragma once

#include "grasp/trainer.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace grasp {

// ---------------------------------------------------------------- method comparison

/// Method names in table order.
const std::vector<std::string>& method_names();

struct GridConfig {
  /// Shared training settings; each method overrides variant and loss terms.
  TrainConfig train;
  /// Selection gate for methods whose transform is not orthogonal.
  double loose_drift_gate = 2.0;
  DiagnosticOptions eval;
  int threads = 1;
};

struct MethodRow {
  std::string name;
  double stair = 0;
  std::optional<double> emergence_mean;  // empty for frozen_full
  double caption_r1 = 0;                 // R@1 at the prefix assigned to G3
  double hard_avg = 0;
  double drift = 0;
  std::size_t params = 0;
  double full_caption_r1 = 0;  // R@1 at k = D against G3
  std::optional<int> selected_epoch;
};

struct MethodResult {
  MethodRow row;
  Transform transform;
  std::optional<Checkpoint> checkpoint;
  DiagnosticReport report;
};

/// Training configuration a method uses (variant, loss terms, contract, gate).
/// Throws kUnknownMethod; returns nullopt for untrained methods.
std::optional<TrainConfig> method_train_config(const std::string& name, const GridConfig& grid);

MethodResult run_method(const std::string& name, const EmbeddingCache& cache, const GridConfig& grid,
                        std::ostream* log = nullptr);

/// Rows in the order of `names` (all methods when empty).
std::vector<MethodRow> run_method_comparison(const EmbeddingCache& cache, const GridConfig& grid,
                                             const std::vector<std::string>& names = {},
                                             std::ostream* log = nullptr);

// ---------------------------------------------------------------- kappa sensitivity

struct KappaVariant {
  std::string name;
  InterfaceContract contract;
};

/// default, relation_delayed (relation/action/order at D/2), attribute_delayed
/// (attribute at D/4), compressed (attribute and relation/action/order at D/8).
std::vector<KappaVariant> default_kappa_variants(int dim);

struct KappaRow {
  std::string name;
  int attribute_kappa = 0;
  int relation_kappa = 0;
  double contract_hard_avg = 0;  // each type at its own boundary
  std::optional<double> leakage;
  double default_stair = 0;      // same model under the default ladder
  double hard_avg = 0;           // staircase HardAvg under the variant's contract
  double caption_r1 = 0;
  double drift = 0;
};

/// Trains `variant` (from grid.train.transform) once per contract.
std::vector<KappaRow> run_kappa_sensitivity(const EmbeddingCache& cache, const GridConfig& grid,
                                            const std::vector<KappaVariant>& variants, std::ostream* log = nullptr);

// ---------------------------------------------------------------- pool sensitivity

struct PoolRow {
  PoolMode pool = PoolMode::kFull;
  std::array<double, 4> recall{};  // assigned cells, G0..G3
  std::array<double, 4> hard{};    // shared across rows
  Staircase staircase;
};

std::vector<PoolRow> run_pool_sensitivity(const EmbeddingCache& cache, const Transform& transform,
                                          const InterfaceContract& contract, const std::vector<PoolMode>& pools,
                                          Split query_split = Split::kTest);

// ---------------------------------------------------------------- gradient check

/// ratio(D) when 16 | D; otherwise {D/4, 3D/8, D/2, 3D/4, D} with views
/// G0, G1, G2, G3, G3 and boundaries object D/4, attribute 3D/8,
/// relation/action/order D/2, full 3D/4 (needs 8 | D).
InterfaceContract gradcheck_contract(int dim);

struct GradCheckRow {
  std::string variant;
  std::string term;  // align, ret, rank, inv, pres, ortho or total
  double max_relative_error = 0;
  std::size_t coordinates = 0;
};

/// Finite-difference checks on random unit rows with parameters pushed away
/// from their initial values: every term alone and the total for the dense
/// variant, the total for the other trainable variants, plus preservation and
/// the ortho monitor where they apply.
std::vector<GradCheckRow> run_gradcheck(int dim, std::uint64_t seed, int batch = 4, double step = 1e-5);

// ---------------------------------------------------------------- cost

struct CostEstimate {
  int dim = 0;
  std::uint64_t gallery = 0;
  double query_ops = 0;
  double offline_ops = 0;
  std::vector<std::pair<int, double>> storage_bytes;  // per prefix
  std::size_t params = 0;
};

/// Throws kConfig for non-positive inputs.
CostEstimate estimate_cost(int dim, std::uint64_t gallery, const std::vector<int>& prefixes, int precision_bytes);

/// 2 decimals with an M / T / GB suffix (decimal units).
std::string format_count(double value, double unit, const char* suffix);

/// Rows: query ops, offline ops, storage at D/16, D/2, D, dense params.
std::vector<std::pair<std::string, std::string>> cost_table(const CostEstimate& c, int precision_bytes);

}  // namespace grasp
