#include "grasp/config.hpp"

#include <fstream>
#include <set>

namespace grasp {

namespace {

[[noreturn]] void bad(const std::string& msg) { throw Error(ErrorCode::kConfig, msg); }

void check_keys(const Json& j, const char* where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) bad(std::string(where) + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.count(key)) bad(std::string(where) + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception&) {
    bad(std::string("key '") + key + "' has the wrong type");
  }
}

// Per-type constants: one number for every type, or an object keyed by type.
void read_typed(const Json& j, const char* key, std::array<double, kNumNegTypes>& out) {
  if (!j.contains(key)) return;
  const Json& v = j.at(key);
  if (v.is_number()) {
    out.fill(v.get<double>());
    return;
  }
  if (!v.is_object()) bad(std::string(key) + " must be a number or an object keyed by negative type");
  for (const auto& [name, value] : v.items()) {
    NegType t;
    try {
      t = parse_neg_type(name);
    } catch (const Error&) {
      bad(std::string(key) + ": unknown negative type '" + name + "'");
    }
    if (!value.is_number()) bad(std::string(key) + "." + name + " must be a number");
    out[static_cast<std::size_t>(index(t))] = value.get<double>();
  }
}

Json typed_json(const std::array<double, kNumNegTypes>& v) {
  Json j = Json::object();
  for (NegType t : kAllNegTypes) j[std::string(to_string(t))] = v[static_cast<std::size_t>(index(t))];
  return j;
}

}  // namespace

// ---------------------------------------------------------------- contract

Json to_json(const InterfaceContract& c) {
  Json j;
  j["prefix_set"] = c.prefixes;
  Json views = Json::array();
  for (ViewLevel v : c.views) views.push_back(std::string(to_string(v)));
  j["view_assignment"] = views;
  Json kappa = Json::object();
  for (NegType t : kAllNegTypes) kappa[std::string(to_string(t))] = c.kappa_of(t);
  j["semantic_boundary"] = kappa;
  return j;
}

InterfaceContract contract_from_json(const Json& j, int dim) {
  InterfaceContract c;
  const bool explicit_prefixes = j.contains("prefix_set");
  if (!explicit_prefixes) {
    if (dim < 16 || dim % 16 != 0) bad("prefix_set is required when D is not a multiple of 16");
    c = InterfaceContract::ratio(dim);
  } else {
    c.dim = dim;
    read(j, "prefix_set", c.prefixes);
    if (!j.contains("view_assignment")) bad("view_assignment is required with an explicit prefix_set");
    if (!j.contains("semantic_boundary")) bad("semantic_boundary is required with an explicit prefix_set");
  }
  if (j.contains("view_assignment")) {
    const Json& v = j.at("view_assignment");
    if (!v.is_array()) bad("view_assignment must be an array of view names");
    c.views.clear();
    for (const auto& name : v) {
      if (!name.is_string()) bad("view_assignment entries must be strings");
      try {
        c.views.push_back(parse_view(name.get<std::string>()));
      } catch (const Error&) {
        bad("unknown view '" + name.get<std::string>() + "'");
      }
    }
  }
  if (j.contains("semantic_boundary")) {
    const Json& k = j.at("semantic_boundary");
    if (!k.is_object()) bad("semantic_boundary must be an object keyed by negative type");
    std::array<bool, kNumNegTypes> seen{};
    for (const auto& [name, value] : k.items()) {
      NegType t;
      try {
        t = parse_neg_type(name);
      } catch (const Error&) {
        bad("semantic_boundary: unknown negative type '" + name + "'");
      }
      if (!value.is_number_integer()) bad("semantic_boundary." + name + " must be an integer prefix");
      c.kappa[static_cast<std::size_t>(index(t))] = value.get<int>();
      seen[static_cast<std::size_t>(index(t))] = true;
    }
    if (explicit_prefixes) {
      for (NegType t : kAllNegTypes) {
        if (!seen[static_cast<std::size_t>(index(t))]) {
          bad("semantic_boundary is missing '" + std::string(to_string(t)) + "'");
        }
      }
    }
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------- transform

Json to_json(const TransformSpec& s) {
  return {{"variant", std::string(to_string(s.variant))},
          {"butterfly_stacks", s.butterfly_stacks},
          {"adaptor_rank", s.adaptor_rank},
          {"sinkhorn_iterations", s.sinkhorn_iterations},
          {"sinkhorn_temperature", s.sinkhorn_temperature}};
}

TransformSpec transform_from_json(const Json& j) {
  check_keys(j, "transform",
             {"variant", "butterfly_stacks", "adaptor_rank", "sinkhorn_iterations", "sinkhorn_temperature"});
  TransformSpec s;
  if (j.contains("variant")) {
    std::string name;
    read(j, "variant", name);
    s.variant = parse_variant(name);
  }
  read(j, "butterfly_stacks", s.butterfly_stacks);
  read(j, "adaptor_rank", s.adaptor_rank);
  read(j, "sinkhorn_iterations", s.sinkhorn_iterations);
  read(j, "sinkhorn_temperature", s.sinkhorn_temperature);
  if (s.butterfly_stacks < 1) bad("butterfly_stacks must be >= 1");
  if (s.adaptor_rank < 1) bad("adaptor_rank must be >= 1");
  if (s.sinkhorn_iterations < 1) bad("sinkhorn_iterations must be >= 1");
  if (!(s.sinkhorn_temperature > 0)) bad("sinkhorn_temperature must be > 0");
  return s;
}

// ---------------------------------------------------------------- loss

Json to_json(const LossConfig& c) {
  Json j;
  j["ranking_margins"] = typed_json(c.margins);
  j["invariance_tolerances"] = typed_json(c.tolerances);
  if (c.retention.size() == 0) {
    j["retention_weights"] = "default";
  } else {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < c.retention.rows(); ++r) {
      Json row = Json::array();
      for (Eigen::Index v = 0; v < c.retention.cols(); ++v) row.push_back(c.retention(r, v));
      rows.push_back(row);
    }
    j["retention_weights"] = rows;
  }
  j["loss_weights"] = {{"align", c.align_weight}, {"ret", c.lambda_ret},     {"rank", c.lambda_rank},
                       {"inv", c.lambda_inv},     {"pres", c.lambda_pres},   {"ortho", c.lambda_ortho}};
  if (!c.align_prefix_weights.empty()) j["loss_weights"]["align_prefix"] = c.align_prefix_weights;
  return j;
}

LossConfig loss_from_json(const Json& j, const InterfaceContract& contract) {
  LossConfig c;
  read_typed(j, "ranking_margins", c.margins);
  read_typed(j, "invariance_tolerances", c.tolerances);
  if (j.contains("retention_weights")) {
    const Json& r = j.at("retention_weights");
    if (r.is_string()) {
      if (r.get<std::string>() != "default") bad("retention_weights must be \"default\" or a |K| x 4 array");
    } else if (r.is_array()) {
      c.retention = Matrix::Zero(static_cast<Eigen::Index>(r.size()), kNumViews);
      for (std::size_t k = 0; k < r.size(); ++k) {
        if (!r[k].is_array() || r[k].size() != kNumViews) bad("retention_weights rows must have 4 entries");
        for (int v = 0; v < kNumViews; ++v) {
          if (!r[k][static_cast<std::size_t>(v)].is_number()) bad("retention_weights entries must be numbers");
          c.retention(static_cast<Eigen::Index>(k), v) = r[k][static_cast<std::size_t>(v)].get<double>();
        }
      }
    } else {
      bad("retention_weights must be \"default\" or a |K| x 4 array");
    }
  }
  if (j.contains("loss_weights")) {
    const Json& w = j.at("loss_weights");
    check_keys(w, "loss_weights", {"align", "align_prefix", "ret", "rank", "inv", "pres", "ortho"});
    read(w, "align", c.align_weight);
    read(w, "align_prefix", c.align_prefix_weights);
    read(w, "ret", c.lambda_ret);
    read(w, "rank", c.lambda_rank);
    read(w, "inv", c.lambda_inv);
    read(w, "pres", c.lambda_pres);
    read(w, "ortho", c.lambda_ortho);
  }
  c.validate(contract);
  return c;
}

// ---------------------------------------------------------------- train

Json to_json(const TrainConfig& c) {
  Json j = to_json(c.contract);
  j["dim"] = c.contract.dim;
  j["transform"] = to_json(c.transform);
  j["temperature"] = {{"init", c.init_temperature}};
  const Json loss = to_json(c.loss);
  for (const auto& [k, v] : loss.items()) j[k] = v;
  j["curriculum"] = {{"schedule", std::string(to_string(c.curriculum))}, {"warmup_epochs", c.warmup_epochs}};
  j["model_selection"] = {{"drift_gate", c.drift_gate}, {"drift_rows", c.drift_rows}};
  j["optimizer"] = {{"lr_transform", c.lr_transform}, {"lr_temperature", c.lr_temperature}};
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  return j;
}

TrainConfig train_config_from_json(const Json& j, int dim) {
  check_keys(j, "config",
             {"dim", "prefix_set", "view_assignment", "semantic_boundary", "transform", "temperature",
              "ranking_margins", "invariance_tolerances", "retention_weights", "loss_weights", "curriculum",
              "model_selection", "optimizer", "epochs", "batch_size", "seed"});
  if (j.contains("dim")) {
    int declared = 0;
    read(j, "dim", declared);
    if (declared != dim) {
      throw Error(ErrorCode::kDimMismatch,
                  "config declares D=" + std::to_string(declared) + " but the cache has D=" + std::to_string(dim));
    }
  }
  TrainConfig c;
  c.contract = contract_from_json(j, dim);
  if (j.contains("transform")) c.transform = transform_from_json(j.at("transform"));
  if (j.contains("temperature")) {
    check_keys(j.at("temperature"), "temperature", {"init"});
    read(j.at("temperature"), "init", c.init_temperature);
  }
  c.loss = loss_from_json(j, c.contract);
  if (j.contains("curriculum")) {
    const Json& cur = j.at("curriculum");
    check_keys(cur, "curriculum", {"schedule", "warmup_epochs"});
    if (cur.contains("schedule")) {
      std::string name;
      read(cur, "schedule", name);
      c.curriculum = parse_curriculum(name);
    }
    read(cur, "warmup_epochs", c.warmup_epochs);
  }
  if (j.contains("model_selection")) {
    check_keys(j.at("model_selection"), "model_selection", {"drift_gate", "drift_rows"});
    read(j.at("model_selection"), "drift_gate", c.drift_gate);
    read(j.at("model_selection"), "drift_rows", c.drift_rows);
  }
  if (j.contains("optimizer")) {
    check_keys(j.at("optimizer"), "optimizer", {"lr_transform", "lr_temperature"});
    read(j.at("optimizer"), "lr_transform", c.lr_transform);
    read(j.at("optimizer"), "lr_temperature", c.lr_temperature);
  }
  read(j, "epochs", c.epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "seed", c.seed);
  c.validate();
  return c;
}

// ---------------------------------------------------------------- synthetic

Json to_json(const SyntheticSpec& s) {
  return {{"dim", s.dim},
          {"blocks", {{"object", s.blocks[0]}, {"attribute", s.blocks[1]}, {"relation", s.blocks[2]},
                      {"residual", s.blocks[3]}}},
          {"cardinalities", {{"object", s.cardinalities[0]}, {"attribute", s.cardinalities[1]},
                             {"relation", s.cardinalities[2]}}},
          {"block_weights", s.block_weights},
          {"block_decay", s.block_decay},
          {"noise_std", s.noise_std},
          {"n_examples", s.n_examples},
          {"seed", s.seed},
          {"train_fraction", s.train_fraction},
          {"val_fraction", s.val_fraction}};
}

SyntheticSpec synthetic_from_json(const Json& j) {
  check_keys(j, "synthetic spec",
             {"dim", "blocks", "cardinalities", "block_weights", "block_decay", "noise_std", "n_examples", "seed",
              "train_fraction", "val_fraction"});
  SyntheticSpec s;
  read(j, "dim", s.dim);
  if (j.contains("blocks")) {
    const Json& b = j.at("blocks");
    check_keys(b, "blocks", {"object", "attribute", "relation", "residual"});
    read(b, "object", s.blocks[0]);
    read(b, "attribute", s.blocks[1]);
    read(b, "relation", s.blocks[2]);
    read(b, "residual", s.blocks[3]);
  }
  if (j.contains("cardinalities")) {
    const Json& c = j.at("cardinalities");
    check_keys(c, "cardinalities", {"object", "attribute", "relation"});
    read(c, "object", s.cardinalities[0]);
    read(c, "attribute", s.cardinalities[1]);
    read(c, "relation", s.cardinalities[2]);
  }
  read(j, "block_weights", s.block_weights);
  read(j, "block_decay", s.block_decay);
  read(j, "noise_std", s.noise_std);
  read(j, "n_examples", s.n_examples);
  read(j, "seed", s.seed);
  read(j, "train_fraction", s.train_fraction);
  read(j, "val_fraction", s.val_fraction);
  s.validate();
  return s;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    bad(path + ": " + e.what());
  }
}

}  // namespace grasp
