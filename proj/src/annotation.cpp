#include "grasp/annotation.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <functional>

namespace grasp {

using nlohmann::json;

namespace {

constexpr std::array<const char*, kNumViews> kViewKeys = {"G0", "G1", "G2", "G3"};

struct AuditCheck {
  const char* label;
  AuditCode code;
  std::function<bool(const AnnotationRow&, const CaptionRegistry*)> passes;
};

const std::string* find(const std::map<std::string, std::string>& m, const std::string& key) {
  auto it = m.find(key);
  return it == m.end() ? nullptr : &it->second;
}

bool grounded_in(const AnnotationRow& row, std::string_view text) {
  if (!row.entity.empty() && contains_normalized(text, row.entity)) return true;
  return row.surface_form && !row.surface_form->empty() &&
         contains_normalized(text, *row.surface_form);
}

const std::vector<AuditCheck>& audit_checks() {
  static const std::vector<AuditCheck> checks = {
      {"All four semantic views are present", AuditCode::kMissingView,
       [](const AnnotationRow& r, const CaptionRegistry*) {
         return std::all_of(kViewKeys.begin(), kViewKeys.end(), [&](const char* k) {
           const auto* v = find(r.views, k);
           return v != nullptr && !v->empty();
         });
       }},
      {"All six negative types are present", AuditCode::kMissingNegativeType,
       [](const AnnotationRow& r, const CaptionRegistry*) {
         return std::all_of(kAllNegTypes.begin(), kAllNegTypes.end(), [&](NegType t) {
           const auto* v = find(r.negatives, std::string(to_string(t)));
           return v != nullptr && !v->empty();
         });
       }},
      {"Entity is non-empty", AuditCode::kEmptyEntity,
       [](const AnnotationRow& r, const CaptionRegistry*) {
         return !normalize_text(r.entity).empty();
       }},
      {"Caption is copied exactly from input captions", AuditCode::kCaptionNotCopied,
       [](const AnnotationRow& r, const CaptionRegistry* reg) {
         if (reg == nullptr) return true;
         auto it = reg->captions.find(r.id);
         return it != reg->captions.end() && it->second == r.caption;
       }},
      {"G3 equals selected caption", AuditCode::kG3Mismatch,
       [](const AnnotationRow& r, const CaptionRegistry*) {
         const auto* g3 = find(r.views, "G3");
         return g3 != nullptr && *g3 == r.caption;
       }},
      {"Entity or surface form appears in selected caption", AuditCode::kEntityUngrounded,
       [](const AnnotationRow& r, const CaptionRegistry*) { return grounded_in(r, r.caption); }},
      {"Event view contains entity or surface form", AuditCode::kEventUngrounded,
       [](const AnnotationRow& r, const CaptionRegistry*) {
         const auto* g2 = find(r.views, "G2");
         return g2 != nullptr && grounded_in(r, *g2);
       }},
      {"Every negative differs from selected caption", AuditCode::kNegativeEqualsCaption,
       [](const AnnotationRow& r, const CaptionRegistry*) {
         const std::string caption = normalize_text(r.caption);
         return std::none_of(r.negatives.begin(), r.negatives.end(),
                             [&](const auto& kv) { return normalize_text(kv.second) == caption; });
       }},
      {"Full negative is copied from supplied distractors", AuditCode::kFullNegNotCopied,
       [](const AnnotationRow& r, const CaptionRegistry*) {
         const auto* full = find(r.negatives, "full");
         return full != nullptr &&
                std::find(r.distractors.begin(), r.distractors.end(), *full) != r.distractors.end();
       }},
  };
  return checks;
}

bool attribute_view_differs(const AnnotationRow& row) {
  const auto* g0 = find(row.views, "G0");
  const auto* g1 = find(row.views, "G1");
  return g0 && g1 && normalize_text(*g0) != normalize_text(*g1);
}

std::map<std::string, std::string> string_map(const json& j, const char* key) {
  std::map<std::string, std::string> out;
  if (!j.contains(key) || j.at(key).is_null()) return out;
  const json& m = j.at(key);
  if (!m.is_object()) throw Error(ErrorCode::kMalformed, std::string(key) + " must be an object");
  for (const auto& [k, v] : m.items()) {
    if (v.is_null()) continue;
    if (!v.is_string()) throw Error(ErrorCode::kMalformed, std::string(key) + "." + k + " must be a string");
    out.emplace(k, v.get<std::string>());
  }
  return out;
}

std::string required_string(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw Error(ErrorCode::kMalformed, std::string("missing string field '") + key + "'");
  }
  return j.at(key).get<std::string>();
}

}  // namespace

std::string_view to_string(AuditCode code) {
  switch (code) {
    case AuditCode::kMalformed: return "MALFORMED";
    case AuditCode::kMissingView: return "MISSING_VIEW";
    case AuditCode::kMissingNegativeType: return "MISSING_NEGATIVE_TYPE";
    case AuditCode::kEmptyEntity: return "EMPTY_ENTITY";
    case AuditCode::kCaptionNotCopied: return "CAPTION_NOT_COPIED";
    case AuditCode::kG3Mismatch: return "G3_MISMATCH";
    case AuditCode::kEntityUngrounded: return "ENTITY_UNGROUNDED";
    case AuditCode::kEventUngrounded: return "EVENT_UNGROUNDED";
    case AuditCode::kNegativeEqualsCaption: return "NEGATIVE_EQUALS_CAPTION";
    case AuditCode::kFullNegNotCopied: return "FULL_NEG_NOT_COPIED";
  }
  return "MALFORMED";
}

std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

bool contains_normalized(std::string_view haystack, std::string_view needle) {
  const std::string n = normalize_text(needle);
  if (n.empty()) return false;
  return normalize_text(haystack).find(n) != std::string::npos;
}

Verdict validate_annotation_row(const AnnotationRow& row, const CaptionRegistry* registry) {
  Verdict verdict;
  verdict.attribute_differs = attribute_view_differs(row);
  for (const auto& check : audit_checks()) {
    if (!check.passes(row, registry)) {
      verdict.code = check.code;
      return verdict;
    }
  }
  verdict.accepted = true;
  return verdict;
}

AnnotationRow parse_annotation_line(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kMalformed, e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::kMalformed, "annotation line must be a JSON object");

  AnnotationRow row;
  row.id = required_string(j, "id");
  row.caption = required_string(j, "caption");
  if (j.contains("dataset") && j["dataset"].is_string()) row.dataset = j["dataset"].get<std::string>();
  if (j.contains("split")) {
    if (!j["split"].is_string()) throw Error(ErrorCode::kMalformed, "split must be a string");
    try {
      row.split = parse_split(j["split"].get<std::string>());
    } catch (const Error& e) {
      throw Error(ErrorCode::kMalformed, e.what());
    }
  }
  row.views = string_map(j, "views");
  row.negatives = string_map(j, "negatives");
  if (j.contains("distractors") && !j["distractors"].is_null()) {
    const json& d = j["distractors"];
    if (!d.is_array()) throw Error(ErrorCode::kMalformed, "distractors must be an array");
    for (const auto& s : d) {
      if (!s.is_string()) throw Error(ErrorCode::kMalformed, "distractors must hold strings");
      row.distractors.push_back(s.get<std::string>());
    }
  }
  if (j.contains("entity")) {
    if (j["entity"].is_string()) {
      row.entity = j["entity"].get<std::string>();
    } else if (!j["entity"].is_null()) {
      throw Error(ErrorCode::kMalformed, "entity must be a string");
    }
  }
  if (j.contains("surface_form") && j["surface_form"].is_string()) {
    row.surface_form = j["surface_form"].get<std::string>();
  }
  return row;
}

std::string dump_annotation_line(const AnnotationRow& row) {
  json j;
  j["id"] = row.id;
  j["dataset"] = row.dataset;
  j["split"] = std::string(to_string(row.split));
  j["caption"] = row.caption;
  j["views"] = row.views;
  j["negatives"] = row.negatives;
  j["distractors"] = row.distractors;
  j["entity"] = row.entity;
  j["surface_form"] = row.surface_form ? json(*row.surface_form) : json(nullptr);
  return j.dump();
}

std::vector<AuditRecord> validate_jsonl(const std::vector<std::string>& lines,
                                        const CaptionRegistry* registry, AuditSummary& summary) {
  const auto& checks = audit_checks();
  summary = AuditSummary{};
  summary.passes.assign(checks.size(), 0);
  std::vector<AuditRecord> records;
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::string& line = lines[n];
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    ++summary.attempted;
    AuditRecord rec;
    AnnotationRow row;
    try {
      row = parse_annotation_line(line);
    } catch (const Error&) {
      ++summary.malformed;
      rec.id = "line:" + std::to_string(n + 1);
      rec.verdict.code = AuditCode::kMalformed;
      records.push_back(std::move(rec));
      continue;
    }
    for (std::size_t c = 0; c < checks.size(); ++c) {
      if (checks[c].passes(row, registry)) ++summary.passes[c];
    }
    rec.id = row.id;
    rec.verdict = validate_annotation_row(row, registry);
    if (rec.verdict.accepted) {
      ++summary.accepted;
      if (rec.verdict.attribute_differs) ++summary.attribute_differs;
    } else {
      ++summary.quality_failures;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::string summary_json(const AuditSummary& s) {
  auto rate = [](std::size_t count, std::size_t denom) {
    return denom == 0 ? 0.0 : 100.0 * static_cast<double>(count) / static_cast<double>(denom);
  };
  auto row = [&](const char* group, const std::string& check, std::size_t count, std::size_t denom,
                 const char* action) {
    return json{{"group", group}, {"check", check},          {"count", count},
                {"denom", denom}, {"rate", rate(count, denom)}, {"action", action}};
  };
  const std::size_t parseable = s.attempted - s.malformed;
  json rows = json::array();
  rows.push_back(row("Generation", "All attempted annotations", s.attempted, s.attempted, "--"));
  rows.push_back(row("Generation", "Malformed failures", s.malformed, s.attempted, "Discarded"));
  rows.push_back(row("Generation", "Deterministic quality failures", s.quality_failures, s.attempted,
                     "Discarded"));
  rows.push_back(row("Generation", "Final accepted annotations", s.accepted, s.attempted, "Used"));
  rows.push_back(row("Generation", "Accepted among parseable annotations", s.accepted, parseable, "Used"));
  const auto& checks = audit_checks();
  for (std::size_t c = 0; c < checks.size() && c < s.passes.size(); ++c) {
    rows.push_back(row("Row audit", checks[c].label, s.passes[c], parseable, "Required"));
  }
  rows.push_back(row("Accepted-row diagnostic", "Attribute view differs from object view",
                     s.attribute_differs, s.accepted, "Reported"));
  return json{{"summary", rows}}.dump(2);
}

}  // namespace grasp
