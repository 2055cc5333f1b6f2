#pragma once

#include "grasp/annotation.hpp"

#include <optional>
#include <string>
#include <vector>

namespace grasp::test {

inline AnnotationRow compliant_row() {
  AnnotationRow r;
  r.id = "coco_1";
  r.dataset = "coco";
  r.split = Split::kTest;
  r.caption = "A brown dog runs on the beach";
  r.entity = "dog";
  r.views = {{"G0", "a dog"}, {"G1", "a brown dog"}, {"G2", "a brown dog runs"}, {"G3", r.caption}};
  r.negatives = {{"object", "A brown cat runs on the beach"},
                 {"attribute", "A white dog runs on the beach"},
                 {"relation", "A brown dog runs under the beach"},
                 {"action", "A brown dog sleeps on the beach"},
                 {"order", "The beach runs on a brown dog"},
                 {"full", "Two men ride bicycles downtown"}};
  r.distractors = {"Two men ride bicycles downtown", "A plate of food"};
  return r;
}

struct AnnotationFixture {
  std::string name;
  std::string line;
  bool accepted = false;
  std::optional<AuditCode> code;
};

// Two passing rows, one unparseable row and one row per quality rule.
inline std::vector<AnnotationFixture> annotation_fixtures() {
  const auto with = [](auto edit) {
    AnnotationRow r = compliant_row();
    edit(r);
    return dump_annotation_line(r);
  };
  return {
      {"compliant", with([](AnnotationRow&) {}), true, std::nullopt},
      {"surface form grounds a paraphrased entity", with([](AnnotationRow& r) {
         r.entity = "puppy";
         r.surface_form = "dog";
       }),
       true, std::nullopt},
      {"malformed json", "{\"id\": \"x\", ", false, AuditCode::kMalformed},
      {"missing view", with([](AnnotationRow& r) { r.views.erase("G1"); }), false, AuditCode::kMissingView},
      {"missing order negative", with([](AnnotationRow& r) { r.negatives.erase("order"); }), false,
       AuditCode::kMissingNegativeType},
      {"empty entity", with([](AnnotationRow& r) { r.entity = "  "; }), false, AuditCode::kEmptyEntity},
      {"caption not copied", with([](AnnotationRow& r) { r.id = "coco_2"; }), false, AuditCode::kCaptionNotCopied},
      {"G3 mismatch", with([](AnnotationRow& r) { r.views["G3"] = "a brown dog runs on a beach"; }), false,
       AuditCode::kG3Mismatch},
      {"entity ungrounded", with([](AnnotationRow& r) { r.entity = "horse"; }), false, AuditCode::kEntityUngrounded},
      {"event view ungrounded", with([](AnnotationRow& r) { r.views["G2"] = "something runs"; }), false,
       AuditCode::kEventUngrounded},
      {"negative equals caption",
       with([](AnnotationRow& r) { r.negatives["action"] = "a brown  DOG runs on the beach"; }), false,
       AuditCode::kNegativeEqualsCaption},
      {"full negative not copied", with([](AnnotationRow& r) { r.negatives["full"] = "Two men ride bikes downtown"; }),
       false, AuditCode::kFullNegNotCopied},
  };
}

inline CaptionRegistry fixture_registry() {
  CaptionRegistry registry;
  registry.captions["coco_1"] = compliant_row().caption;
  registry.captions["coco_2"] = "A different source caption";
  return registry;
}

}  // namespace grasp::test
