#pragma once

#include "grasp/synthetic.hpp"
#include "grasp/trainer.hpp"

#include <json.hpp>

namespace grasp {

using Json = nlohmann::json;

// JSON mappings. Readers start from the defaults and override present keys;
// unknown keys and wrong types throw kConfig.

Json to_json(const InterfaceContract& c);
InterfaceContract contract_from_json(const Json& j, int dim);  // missing keys -> ratio ladder

Json to_json(const TransformSpec& s);
TransformSpec transform_from_json(const Json& j);

/// Keys: ranking_margins, invariance_tolerances, retention_weights,
/// loss_weights {align, align_prefix, ret, rank, inv, pres, ortho}.
Json to_json(const LossConfig& c);
LossConfig loss_from_json(const Json& j, const InterfaceContract& contract);

/// Full run configuration: dim, prefix_set, view_assignment,
/// semantic_boundary, transform, temperature, ranking_margins,
/// invariance_tolerances, retention_weights, loss_weights, curriculum,
/// model_selection, optimizer, epochs, batch_size, seed.
Json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j, int dim);

Json to_json(const SyntheticSpec& s);
SyntheticSpec synthetic_from_json(const Json& j);

Json read_json_file(const std::string& path);  // kIo / kConfig

}  // namespace grasp
