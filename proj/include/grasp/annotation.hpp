#pragma once

#include "grasp/common.hpp"

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace grasp {

/// One annotated example: four semantic views, six typed negatives and the
/// caption distractors the full negative must be copied from.
struct AnnotationRow {
  std::string id;
  std::string dataset;
  Split split = Split::kTrain;
  std::string caption;
  std::map<std::string, std::string> views;      // "G0".."G3"
  std::map<std::string, std::string> negatives;  // "object".."full"
  std::vector<std::string> distractors;
  std::string entity;
  std::optional<std::string> surface_form;
};

/// Rejection codes in the order the validator checks them.
enum class AuditCode {
  kMalformed,
  kMissingView,
  kMissingNegativeType,
  kEmptyEntity,
  kCaptionNotCopied,
  kG3Mismatch,
  kEntityUngrounded,
  kEventUngrounded,
  kNegativeEqualsCaption,
  kFullNegNotCopied,
};
inline constexpr int kNumAuditCodes = 10;

std::string_view to_string(AuditCode code);

struct Verdict {
  bool accepted = false;
  std::optional<AuditCode> code;  // set iff rejected
  /// Reported, never filtering: the attribute view differs from the object view.
  bool attribute_differs = false;
};

/// Optional source captions keyed by row id. When present, a row's caption
/// must match its source exactly.
struct CaptionRegistry {
  std::unordered_map<std::string, std::string> captions;
};

/// Lower-cases ASCII letters and collapses whitespace runs to one space.
std::string normalize_text(std::string_view text);
bool contains_normalized(std::string_view haystack, std::string_view needle);

Verdict validate_annotation_row(const AnnotationRow& row, const CaptionRegistry* registry = nullptr);

/// Parses one JSON-lines record. Throws Error(kMalformed) on bad syntax or types.
AnnotationRow parse_annotation_line(std::string_view line);
std::string dump_annotation_line(const AnnotationRow& row);

/// Counts per audit rule, laid out like the annotation-audit table.
struct AuditSummary {
  std::size_t attempted = 0;
  std::size_t malformed = 0;
  std::size_t quality_failures = 0;
  std::size_t accepted = 0;
  /// passes[i]: parseable rows passing rule i (rules as in kAuditChecks).
  std::vector<std::size_t> passes;
  std::size_t attribute_differs = 0;
};

struct AuditRecord {
  std::string id;
  Verdict verdict;
};

/// Validates every line; blank lines are skipped.
std::vector<AuditRecord> validate_jsonl(const std::vector<std::string>& lines,
                                        const CaptionRegistry* registry, AuditSummary& summary);

std::string summary_json(const AuditSummary& summary);

}  // namespace grasp
