#pragma once

#include "grasp/annotation.hpp"
#include "grasp/cache.hpp"
#include "grasp/orthogonal.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace grasp {

/// Planted-factor corpus. Latent coordinates are laid out in block order
/// object | attribute | relation | caption residual.
struct SyntheticSpec {
  int dim = 64;
  std::array<int, 4> blocks{4, 8, 16, 36};
  std::array<int, 3> cardinalities{8, 8, 8};  // object, attribute, relation
  double noise_std = 0.05;
  int n_examples = 2000;
  std::uint64_t seed = 0;
  /// Per-coordinate scale ratio inside a block: coordinate j of a block has
  /// scale block_decay^j before the block is renormalized.
  double block_decay = 0.6;
  /// Norm of each block in every composed vector (object, attribute,
  /// relation, residual).
  std::array<double, 4> block_weights{1.0, 1.0, 1.0, 4.0};
  double train_fraction = 0.70;
  double val_fraction = 0.15;

  void validate() const;  // kBlockOverflow, kConfig
  bool operator==(const SyntheticSpec&) const = default;
};

struct SyntheticCorpus {
  EmbeddingCache cache;
  std::vector<AnnotationRow> rows;
  /// Maps mixed coordinates back to the block-ordered latent space.
  OrthogonalTransform oracle;
  /// Planted factor values per example (object, attribute, relation).
  std::vector<std::array<int, 3>> factors;
};

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

}  // namespace grasp
