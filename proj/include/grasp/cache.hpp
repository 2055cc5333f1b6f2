#pragma once

#include "grasp/common.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace grasp {

/// Frozen unit-norm embeddings for one corpus. Rows are aligned across all
/// member matrices: row i of every matrix belongs to ids[i].
struct EmbeddingCache {
  int dim = 0;
  MatrixF image;
  std::array<MatrixF, kNumViews> text;
  std::array<MatrixF, kNumNegTypes> negatives;
  std::vector<std::string> ids;
  std::map<std::string, Split> split_table;

  std::size_t size() const { return ids.size(); }
  /// Row indices of one split, in row order.
  std::vector<std::size_t> rows_in(Split split) const;
  /// Row index of an id (linear scan); throws kMissingSplit when absent.
  std::size_t row_of(const std::string& id) const;

  /// Checks shapes, ids/splits consistency and row norms (|norm - 1| <= tol).
  void validate(double norm_tolerance = 1e-5) const;

  const MatrixF& view(ViewLevel v) const { return text[index(v)]; }
  const MatrixF& negative(NegType t) const { return negatives[index(t)]; }
};

/// Manifest role names: "image", "text_G0".."text_G3", "neg_object".."neg_full".
std::vector<std::string> cache_roles();

/// Writes the manifest, one little-endian float32 row-major file per role,
/// an ids file (one id per line) and a splits JSON object (id -> split).
void write_cache(const EmbeddingCache& cache, const std::filesystem::path& dir);

/// Loads and verifies a cache. Row norms must lie within 1 +/- 1e-3.
EmbeddingCache load_cache(const std::filesystem::path& manifest_path);

enum class PoolMode { kFull, kTestOnly, kCustom };
std::string_view to_string(PoolMode mode);
PoolMode parse_pool_mode(std::string_view s);

struct CandidatePool {
  PoolMode mode = PoolMode::kFull;
  std::vector<std::string> candidate_ids;  // sorted by id, unique
  std::vector<std::size_t> rows;           // cache rows matching candidate_ids
  ViewLevel view_level = ViewLevel::kG3;
};

/// full: every id; test_only: test ids; custom: the given ids. Ordered by id.
CandidatePool build_pool(const EmbeddingCache& cache, PoolMode mode, ViewLevel view,
                         const std::vector<std::string>& custom_ids = {});

}  // namespace grasp
