#include "grasp/common.hpp"

namespace grasp {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformed: return "MALFORMED";
    case ErrorCode::kShapeMismatch: return "SHAPE_MISMATCH";
    case ErrorCode::kNormViolation: return "NORM_VIOLATION";
    case ErrorCode::kMissingSplit: return "MISSING_SPLIT";
    case ErrorCode::kEmptyPool: return "EMPTY_POOL";
    case ErrorCode::kBlockOverflow: return "BLOCK_OVERFLOW";
    case ErrorCode::kIo: return "IO";
    case ErrorCode::kSingularSolve: return "SINGULAR_SOLVE";
    case ErrorCode::kDimMismatch: return "DIM_MISMATCH";
    case ErrorCode::kZeroPrefix: return "ZERO_PREFIX";
    case ErrorCode::kDegenerateCovariance: return "DEGENERATE_COVARIANCE";
    case ErrorCode::kNotPowerOfTwo: return "NOT_POWER_OF_TWO";
    case ErrorCode::kUnknownVariant: return "UNKNOWN_VARIANT";
    case ErrorCode::kInvalidContract: return "INVALID_CONTRACT";
    case ErrorCode::kNonfiniteLoss: return "NONFINITE_LOSS";
    case ErrorCode::kDiverged: return "DIVERGED";
    case ErrorCode::kNoValidCheckpoint: return "NO_VALID_CHECKPOINT";
    case ErrorCode::kPositiveNotInPool: return "POSITIVE_NOT_IN_POOL";
    case ErrorCode::kMissingCell: return "MISSING_CELL";
    case ErrorCode::kNoEarlierPrefix: return "NO_EARLIER_PREFIX";
    case ErrorCode::kEmptySet: return "EMPTY_SET";
    case ErrorCode::kMissingLabels: return "MISSING_LABELS";
    case ErrorCode::kUnknownMethod: return "UNKNOWN_METHOD";
    case ErrorCode::kConfig: return "CONFIG";
    case ErrorCode::kUsage: return "USAGE";
  }
  return "UNKNOWN";
}

std::string_view to_string(ViewLevel v) {
  static constexpr std::array<std::string_view, kNumViews> names = {"G0", "G1", "G2", "G3"};
  return names[index(v)];
}

std::string_view to_string(NegType t) {
  static constexpr std::array<std::string_view, kNumNegTypes> names = {
      "object", "attribute", "relation", "action", "order", "full"};
  return names[index(t)];
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

ViewLevel parse_view(std::string_view s) {
  for (int i = 0; i < kNumViews; ++i) {
    if (s == to_string(static_cast<ViewLevel>(i))) return static_cast<ViewLevel>(i);
  }
  throw Error(ErrorCode::kConfig, "unknown view level '" + std::string(s) + "'");
}

NegType parse_neg_type(std::string_view s) {
  for (NegType t : kAllNegTypes) {
    if (s == to_string(t)) return t;
  }
  throw Error(ErrorCode::kConfig, "unknown negative type '" + std::string(s) + "'");
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "val" || s == "validation") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw Error(ErrorCode::kMissingSplit, "unknown split '" + std::string(s) + "'");
}

}  // namespace grasp
