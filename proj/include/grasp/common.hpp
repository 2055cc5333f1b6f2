#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace grasp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Machine-readable error codes shared by every module.
enum class ErrorCode {
  // datastore
  kMalformed,
  kShapeMismatch,
  kNormViolation,
  kMissingSplit,
  kEmptyPool,
  kBlockOverflow,
  kIo,
  // transforms
  kSingularSolve,
  kDimMismatch,
  kZeroPrefix,
  kDegenerateCovariance,
  kNotPowerOfTwo,
  kUnknownVariant,
  kInvalidContract,
  // objective / trainer
  kNonfiniteLoss,
  kDiverged,
  kNoValidCheckpoint,
  // metrics
  kPositiveNotInPool,
  kMissingCell,
  kNoEarlierPrefix,
  kEmptySet,
  kMissingLabels,
  // harness / cli
  kUnknownMethod,
  kConfig,
  kUsage,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Semantic text views, coarse to fine.
enum class ViewLevel : int { kG0 = 0, kG1 = 1, kG2 = 2, kG3 = 3 };
inline constexpr int kNumViews = 4;

/// Typed hard-negative kinds, in canonical order.
enum class NegType : int { kObject = 0, kAttribute, kRelation, kAction, kOrder, kFull };
inline constexpr int kNumNegTypes = 6;
inline constexpr std::array<NegType, kNumNegTypes> kAllNegTypes = {
    NegType::kObject, NegType::kAttribute, NegType::kRelation,
    NegType::kAction, NegType::kOrder,     NegType::kFull};

enum class Split { kTrain, kVal, kTest };

std::string_view to_string(ViewLevel v);
std::string_view to_string(NegType t);
std::string_view to_string(Split s);
ViewLevel parse_view(std::string_view s);
NegType parse_neg_type(std::string_view s);
Split parse_split(std::string_view s);

/// Style-matched positive view for a negative type: object->G0, attribute->G1,
/// relation/action/order->G2, full->G3.
constexpr ViewLevel positive_view(NegType t) {
  switch (t) {
    case NegType::kObject: return ViewLevel::kG0;
    case NegType::kAttribute: return ViewLevel::kG1;
    case NegType::kFull: return ViewLevel::kG3;
    default: return ViewLevel::kG2;
  }
}

inline constexpr int index(ViewLevel v) { return static_cast<int>(v); }
inline constexpr int index(NegType t) { return static_cast<int>(t); }

}  // namespace grasp
