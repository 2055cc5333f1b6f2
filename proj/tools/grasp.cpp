#include "grasp/checkpoint.hpp"
#include "grasp/config.hpp"
#include "grasp/harness.hpp"
#include "grasp/report.hpp"
#include "grasp/synthetic.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#ifndef GRASP_VERSION
#define GRASP_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace grasp;

namespace {

enum Exit { kExitOk = 0, kExitRuntime = 1, kExitUsage = 2, kExitConfig = 3, kExitData = 4, kExitGate = 5 };

int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::kUsage: return kExitUsage;
    case ErrorCode::kConfig:
    case ErrorCode::kInvalidContract:
    case ErrorCode::kUnknownVariant:
    case ErrorCode::kUnknownMethod:
    case ErrorCode::kNotPowerOfTwo:
    case ErrorCode::kBlockOverflow: return kExitConfig;
    case ErrorCode::kMalformed:
    case ErrorCode::kShapeMismatch:
    case ErrorCode::kNormViolation:
    case ErrorCode::kMissingSplit:
    case ErrorCode::kEmptyPool:
    case ErrorCode::kIo:
    case ErrorCode::kDimMismatch:
    case ErrorCode::kZeroPrefix:
    case ErrorCode::kDegenerateCovariance:
    case ErrorCode::kPositiveNotInPool:
    case ErrorCode::kMissingCell:
    case ErrorCode::kNoEarlierPrefix:
    case ErrorCode::kEmptySet:
    case ErrorCode::kMissingLabels: return kExitData;
    case ErrorCode::kDiverged:
    case ErrorCode::kNoValidCheckpoint: return kExitGate;
    default: return kExitRuntime;
  }
}

std::string_view category(int exit) {
  switch (exit) {
    case kExitUsage: return "USAGE";
    case kExitConfig: return "CONFIG";
    case kExitData: return "DATA";
    case kExitGate: return "GATE";
    default: return "RUNTIME";
  }
}

int fail(int exit, std::string_view code, const std::string& message) {
  const Json j = {{"error", std::string(category(exit))}, {"code", std::string(code)}, {"message", message}};
  std::cerr << j.dump() << '\n';
  return exit;
}

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Output directory plus the artifact list that ends up in manifest.json.
class RunDir {
 public:
  explicit RunDir(std::string out) : root_(std::move(out)) {
    if (root_.empty()) return;
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) throw Error(ErrorCode::kIo, "cannot create " + root_.string() + ": " + ec.message());
  }

  bool enabled() const { return !root_.empty(); }
  fs::path path(const std::string& rel) const { return root_ / rel; }

  void write(const std::string& rel, const std::string& content) {
    if (!enabled()) return;
    const fs::path p = path(rel);
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << content;
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + p.string());
    record(rel);
  }

  // Records a file some library call wrote under the run directory.
  void record(const std::string& rel) {
    if (!fs::exists(path(rel))) throw Error(ErrorCode::kIo, "expected artifact missing: " + rel);
    artifacts_[rel] = true;
  }

  void record_tree(const std::string& rel) {
    for (const auto& e : fs::recursive_directory_iterator(path(rel))) {
      if (e.is_regular_file()) record(fs::relative(e.path(), root_).generic_string());
    }
  }

  void finish(const std::string& verb, const Json& config, std::uint64_t seed) {
    if (!enabled()) return;
    Json files = Json::array();
    for (const auto& [rel, _] : artifacts_) {
      const std::string data = slurp(path(rel));
      files.push_back({{"path", rel}, {"bytes", data.size()}, {"fnv1a64", hex(fnv1a(data))}});
    }
    const Json manifest = {{"tool", "grasp"},
                           {"version", GRASP_VERSION},
                           {"verb", verb},
                           {"seed", seed},
                           {"config_hash", "fnv1a64:" + hex(fnv1a(config.dump()))},
                           {"config", config},
                           {"artifacts", files}};
    std::ofstream(path("manifest.json")) << manifest.dump(2) << '\n';
  }

 private:
  fs::path root_;
  std::map<std::string, bool> artifacts_;
};

void notice(const std::string& msg) { std::cerr << "notice: " << msg << '\n'; }

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

// Per-row integer labels from a CSV whose first column is the id and second an integer.
std::vector<int> read_labels(const std::string& path, const EmbeddingCache& cache) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::unordered_map<std::string, int> by_id;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    const auto fields = split_list(line);
    if (fields.size() < 2) throw Error(ErrorCode::kMalformed, "label rows need id,label");
    try {
      by_id[fields[0]] = std::stoi(fields[1]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kMalformed, "label '" + fields[1] + "' is not an integer");
    }
  }
  std::vector<int> labels;
  labels.reserve(cache.size());
  for (const auto& id : cache.ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw Error(ErrorCode::kMissingLabels, "no label for id '" + id + "'");
    labels.push_back(it->second);
  }
  return labels;
}

// Shared training flags: explicit flags beat the config file.
struct TrainFlags {
  std::string cache;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<std::string> variant;
  std::optional<double> lr;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--cache", f.cache, "cache manifest.json")->required();
  cmd->add_option("--config", f.config, "run configuration (JSON)");
  cmd->add_option("--seed", f.seed, "seed (overrides the config)");
  cmd->add_option("--epochs", f.epochs, "epochs (overrides the config)");
  cmd->add_option("--variant", f.variant, "transform variant (overrides the config)");
  cmd->add_option("--lr", f.lr, "step size for transform and temperatures (overrides the config)");
}

TrainConfig resolve_train_config(const TrainFlags& f, int dim) {
  Json j = f.config.empty() ? Json::object() : read_json_file(f.config);
  if (!j.is_object()) throw Error(ErrorCode::kConfig, "config must be a JSON object");
  const auto override_key = [&](const char* flag, Json& parent, const char* key, const Json& value) {
    if (parent.contains(key)) notice(std::string(flag) + " overrides the config value");
    parent[key] = value;
  };
  if (f.seed) override_key("--seed", j, "seed", *f.seed);
  if (f.epochs) override_key("--epochs", j, "epochs", *f.epochs);
  if (f.variant) {
    if (!j.contains("transform")) j["transform"] = Json::object();
    override_key("--variant", j["transform"], "variant", *f.variant);
  }
  if (f.lr) {
    if (!j.contains("optimizer")) j["optimizer"] = Json::object();
    override_key("--lr", j["optimizer"], "lr_transform", *f.lr);
    j["optimizer"]["lr_temperature"] = *f.lr;
  }
  return train_config_from_json(j, dim);
}

// ---------------------------------------------------------------- verbs

int cmd_synth(const std::string& spec_path, std::optional<std::uint64_t> seed, RunDir& run) {
  SyntheticSpec spec = spec_path.empty() ? SyntheticSpec{} : synthetic_from_json(read_json_file(spec_path));
  if (seed) {
    if (!spec_path.empty() && read_json_file(spec_path).contains("seed")) notice("--seed overrides the seed in --spec");
    spec.seed = *seed;
  }
  const SyntheticCorpus corpus = generate_synthetic(spec);
  write_cache(corpus.cache, run.path("cache"));
  run.record_tree("cache");
  std::string ann;
  for (const auto& row : corpus.rows) ann += dump_annotation_line(row) + "\n";
  run.write("annotations.jsonl", ann);
  std::string factors = "id,object,attribute,relation\n";
  for (std::size_t i = 0; i < corpus.rows.size(); ++i) {
    const auto& f = corpus.factors[i];
    factors += corpus.rows[i].id + "," + std::to_string(f[0]) + "," + std::to_string(f[1]) + "," +
               std::to_string(f[2]) + "\n";
  }
  run.write("factors.csv", factors);
  const Matrix& R = corpus.oracle.R;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = R;
  run.write("oracle.f64", std::string(reinterpret_cast<const char*>(rm.data()), rm.size() * sizeof(double)));
  run.write("spec.json", to_json(spec).dump(2) + "\n");
  run.finish("synth", to_json(spec), spec.seed);
  std::cout << "synthetic cache: " << corpus.cache.size() << " rows, D=" << spec.dim << '\n';
  return kExitOk;
}

int cmd_validate(const std::string& annotations, const std::string& captions, const std::string& cache_path,
                 RunDir& run) {
  if (annotations.empty() && cache_path.empty()) {
    throw Error(ErrorCode::kUsage, "validate needs --annotations and/or --cache");
  }
  Json config = Json::object();
  if (!cache_path.empty()) {
    const EmbeddingCache cache = load_cache(cache_path);
    const Json summary = {{"rows", cache.size()}, {"dim", cache.dim},
                          {"train", cache.rows_in(Split::kTrain).size()},
                          {"val", cache.rows_in(Split::kVal).size()},
                          {"test", cache.rows_in(Split::kTest).size()}};
    run.write("cache_summary.json", summary.dump(2) + "\n");
    std::cout << "cache ok: " << summary.dump() << '\n';
    config["cache"] = cache_path;
  }
  if (!annotations.empty()) {
    std::ifstream in(annotations);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + annotations);
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    CaptionRegistry registry;
    if (!captions.empty()) {
      const Json j = read_json_file(captions);
      if (!j.is_object()) throw Error(ErrorCode::kMalformed, "captions file must map id -> caption");
      for (const auto& [id, cap] : j.items()) registry.captions[id] = cap.get<std::string>();
    }
    AuditSummary summary;
    const auto records = validate_jsonl(lines, captions.empty() ? nullptr : &registry, summary);
    std::string audit;
    for (const auto& r : records) {
      const Json j = {{"id", r.id},
                      {"verdict", r.verdict.accepted ? "Accept" : "Reject"},
                      {"accepted", r.verdict.accepted},
                      {"code", r.verdict.code ? Json(std::string(to_string(*r.verdict.code))) : Json(nullptr)},
                      {"attribute_differs", r.verdict.attribute_differs}};
      audit += j.dump() + "\n";
    }
    run.write("audit.jsonl", audit);
    run.write("audit_summary.json", summary_json(summary) + "\n");
    std::cout << summary_json(summary) << '\n';
    config["annotations"] = annotations;
  }
  run.finish("validate", config, 0);
  return kExitOk;
}

int cmd_train(const TrainFlags& flags, RunDir& run) {
  const EmbeddingCache cache = load_cache(flags.cache);
  const TrainConfig cfg = resolve_train_config(flags, cache.dim);
  run.write("config.json", to_json(cfg).dump(2) + "\n");
  std::ostringstream log;
  struct Tee : std::streambuf {
    std::streambuf *a, *b;
    Tee(std::streambuf* a, std::streambuf* b) : a(a), b(b) {}
    int overflow(int c) override {
      if (c == traits_type::eof()) return traits_type::not_eof(c);
      a->sputc(static_cast<char>(c));
      b->sputc(static_cast<char>(c));
      return c;
    }
    int sync() override { return a->pubsync() | b->pubsync(); }
  } tee(std::cout.rdbuf(), log.rdbuf());
  std::ostream out(&tee);
  const Checkpoint ck = train(cfg, cache, &out);
  if (run.enabled()) {
    save_checkpoint(ck, run.path("checkpoint.grsp").string());
    run.record("checkpoint.grsp");
  }
  run.write("train.log", log.str());
  std::string trace;
  for (const auto& r : ck.trace) {
    Json e = {{"epoch", r.epoch}, {"val_stair", r.val_stair}, {"val_hard_avg", r.val_hard_avg},
              {"val_drift", r.val_drift}};
    e["terms"] = {{"align", r.terms.align},      {"ret", r.terms.retention}, {"rank", r.terms.rank},
                  {"inv", r.terms.invariance},   {"pres", r.terms.preservation},
                  {"ortho", r.terms.ortho},      {"total", r.terms.total}};
    Json types = Json::array();
    for (NegType t : kAllNegTypes)
      if (r.enabled[static_cast<std::size_t>(index(t))]) types.push_back(std::string(to_string(t)));
    e["types"] = types;
    trace += e.dump() + "\n";
  }
  run.write("trace.jsonl", trace);
  run.finish("train", to_json(cfg), cfg.seed);
  std::printf("selected epoch %d val_stair=%.2f val_drift=%.2e\n", ck.epoch, ck.val_stair, ck.val_drift);
  return kExitOk;
}

struct EvalFlags {
  std::string cache;
  std::string checkpoint;
  std::string baseline;
  std::string config;
  std::string pool = "full";
  std::string split = "test";
  std::string labels;
  std::uint64_t seed = 0;
};

int cmd_eval(const EvalFlags& f, RunDir& run) {
  const EmbeddingCache cache = load_cache(f.cache);
  if (f.checkpoint.empty() == f.baseline.empty()) {
    throw Error(ErrorCode::kUsage, "eval needs exactly one of --checkpoint or --baseline");
  }
  Transform transform = Transform::identity(cache.dim);
  InterfaceContract contract = f.config.empty() ? InterfaceContract{} : contract_from_json(read_json_file(f.config), cache.dim);
  std::string label;
  if (!f.checkpoint.empty()) {
    const Checkpoint ck = load_checkpoint(f.checkpoint);
    if (ck.model.dim() != cache.dim) throw Error(ErrorCode::kDimMismatch, "checkpoint and cache dimensions differ");
    transform = ck.model.evaluation_transform();
    if (f.config.empty()) contract = ck.contract;
    label = std::string(to_string(ck.model.spec().variant));
  } else {
    GridConfig grid;
    grid.train.contract = InterfaceContract::ratio(cache.dim);
    grid.train.seed = f.seed;
    if (f.baseline == "identity" || f.baseline == "direct_prefix") {
      label = "direct_prefix";
    } else if (f.baseline == "pca" || f.baseline == "pca_prefix") {
      label = "pca_prefix";
    } else if (f.baseline == "random_rotation") {
      label = "random_rotation";
    } else {
      throw Error(ErrorCode::kUsage, "unknown baseline '" + f.baseline + "' (identity, pca, random_rotation)");
    }
    if (label == "pca_prefix") {
      const auto rows = cache.rows_in(Split::kTrain);
      Matrix m(static_cast<Eigen::Index>(2 * rows.size()), cache.dim);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        m.row(static_cast<Eigen::Index>(2 * i)) = cache.image.row(static_cast<Eigen::Index>(rows[i])).cast<double>();
        m.row(static_cast<Eigen::Index>(2 * i + 1)) =
            cache.view(ViewLevel::kG3).row(static_cast<Eigen::Index>(rows[i])).cast<double>();
      }
      transform = Transform::from(fit_pca(m).projection);
    } else if (label == "random_rotation") {
      transform = Transform::from(random_orthogonal(cache.dim, f.seed));
    }
    if (f.config.empty()) contract = InterfaceContract::ratio(cache.dim);
  }
  DiagnosticOptions opts;
  opts.pool_mode = parse_pool_mode(f.pool);
  opts.query_split = parse_split(f.split);
  opts.seed = f.seed;
  if (!f.labels.empty()) opts.labels = read_labels(f.labels, cache);
  const DiagnosticReport rep = diagnose(cache, transform, contract, opts);
  Json doc = to_json(rep);
  doc["method"] = label;
  doc["pool"] = f.pool;
  doc["split"] = f.split;
  run.write("report.json", doc.dump(2) + "\n");
  run.write("staircase.csv", staircase_csv({{label, rep}}));
  run.write("emergence.csv", emergence_csv({{label, rep}}));
  run.write("sel.csv", sel_csv(rep));
  run.write("recall.csv", recall_csv(rep));
  const Json config = {{"cache", f.cache}, {"checkpoint", f.checkpoint}, {"baseline", f.baseline},
                       {"contract", to_json(contract)}, {"pool", f.pool}, {"split", f.split}};
  run.finish("eval", config, f.seed);
  std::cout << staircase_csv({{label, rep}});
  std::printf("drift %.3e (raw %.3e, %zu pairs)\n", rep.drift.max_abs, rep.drift_raw.max_abs, rep.drift.pairs);
  return kExitOk;
}

GridConfig grid_from(const TrainFlags& f, const EmbeddingCache& cache, int threads, double loose_gate) {
  GridConfig grid;
  grid.train = resolve_train_config(f, cache.dim);
  grid.threads = threads;
  grid.loose_drift_gate = loose_gate;
  grid.eval.seed = grid.train.seed;
  return grid;
}

int cmd_compare(const TrainFlags& f, const std::string& methods, int threads, double loose_gate, RunDir& run) {
  const EmbeddingCache cache = load_cache(f.cache);
  const GridConfig grid = grid_from(f, cache, threads, loose_gate);
  const auto names = split_list(methods);
  std::ostringstream log;
  const auto rows = run_method_comparison(cache, grid, names, &log);
  Json table = Json::array();
  for (const auto& r : rows) table.push_back(to_json(r));
  run.write("methods.json", table.dump(2) + "\n");
  run.write("methods.csv", methods_csv(rows));
  run.write("compare.log", log.str());
  Json config = to_json(grid.train);
  config["methods"] = names.empty() ? method_names() : names;
  config["loose_drift_gate"] = loose_gate;
  run.finish("compare", config, grid.train.seed);
  std::cout << methods_csv(rows);
  return kExitOk;
}

int cmd_kappa(const TrainFlags& f, const std::string& variants, int threads, RunDir& run) {
  const EmbeddingCache cache = load_cache(f.cache);
  const GridConfig grid = grid_from(f, cache, threads, 2.0);
  std::vector<KappaVariant> all = default_kappa_variants(cache.dim);
  for (auto& v : all) v.contract.views = grid.train.contract.views;
  std::vector<KappaVariant> chosen;
  const auto names = split_list(variants);
  if (names.empty()) {
    chosen = all;
  } else {
    for (const auto& n : names) {
      auto it = std::find_if(all.begin(), all.end(), [&](const KappaVariant& v) { return v.name == n; });
      if (it == all.end()) throw Error(ErrorCode::kConfig, "unknown kappa variant '" + n + "'");
      chosen.push_back(*it);
    }
  }
  std::ostringstream log;
  const auto rows = run_kappa_sensitivity(cache, grid, chosen, &log);
  Json table = Json::array();
  for (const auto& r : rows) table.push_back(to_json(r));
  run.write("kappa.json", table.dump(2) + "\n");
  run.write("kappa.csv", kappa_csv(rows));
  run.write("kappa.log", log.str());
  Json config = to_json(grid.train);
  Json vs = Json::array();
  for (const auto& v : chosen) vs.push_back(v.name);
  config["variants"] = vs;
  run.finish("kappa", config, grid.train.seed);
  std::cout << kappa_csv(rows);
  return kExitOk;
}

int cmd_pool(const std::string& cache_path, const std::string& checkpoint, const std::string& pools,
             const std::string& split, RunDir& run) {
  const EmbeddingCache cache = load_cache(cache_path);
  const Checkpoint ck = load_checkpoint(checkpoint);
  std::vector<PoolMode> modes;
  for (const auto& p : split_list(pools)) modes.push_back(parse_pool_mode(p));
  if (modes.empty()) throw Error(ErrorCode::kUsage, "--pools is empty");
  const auto rows = run_pool_sensitivity(cache, ck.model.evaluation_transform(), ck.contract, modes, parse_split(split));
  Json table = Json::array();
  for (const auto& r : rows) table.push_back(to_json(r));
  run.write("pool.json", table.dump(2) + "\n");
  run.write("pool.csv", pool_csv(rows));
  run.finish("pool", {{"cache", cache_path}, {"checkpoint", checkpoint}, {"pools", pools}, {"split", split}}, 0);
  std::cout << pool_csv(rows);
  return kExitOk;
}

int cmd_cost(int dim, std::uint64_t gallery, int precision, RunDir& run) {
  if (dim < 16 || dim % 16 != 0) throw Error(ErrorCode::kConfig, "--dim must be a positive multiple of 16");
  const CostEstimate c = estimate_cost(dim, gallery, InterfaceContract::ratio(dim).prefixes, precision);
  const auto table = cost_table(c, precision);
  std::string csv = "Setting,D=" + std::to_string(dim) + "\n";
  for (const auto& [k, v] : table) csv += k + "," + v + "\n";
  Json doc = to_json(c);
  doc["precision_bytes"] = precision;
  Json rows = Json::array();
  for (const auto& [k, v] : table) rows.push_back({{"setting", k}, {"value", v}});
  doc["table"] = rows;
  run.write("cost.csv", csv);
  run.write("cost.json", doc.dump(2) + "\n");
  run.finish("cost", {{"dim", dim}, {"gallery", gallery}, {"precision_bytes", precision}}, 0);
  std::cout << csv;
  return kExitOk;
}

int cmd_gradcheck(int dim, std::uint64_t seed, int batch, double step, double tolerance, RunDir& run) {
  const auto rows = run_gradcheck(dim, seed, batch, step);
  double worst = 0;
  Json table = Json::array();
  for (const auto& r : rows) {
    std::printf("%-20s %-6s %.3e (%zu coordinates)\n", r.variant.c_str(), r.term.c_str(), r.max_relative_error,
                r.coordinates);
    worst = std::max(worst, r.max_relative_error);
    table.push_back(to_json(r));
  }
  std::printf("max relative error %.3e (tolerance %.1e)\n", worst, tolerance);
  run.write("gradcheck.json", Json{{"rows", table}, {"max_relative_error", worst}, {"tolerance", tolerance}}.dump(2) + "\n");
  run.finish("gradcheck", {{"dim", dim}, {"batch", batch}, {"step", step}, {"tolerance", tolerance}}, seed);
  if (!(worst <= tolerance)) {
    char msg[96];
    std::snprintf(msg, sizeof(msg), "max relative error %.3e exceeds %.1e", worst, tolerance);
    return fail(kExitGate, "GRADCHECK", msg);
  }
  return kExitOk;
}

int cmd_report(const std::vector<std::string>& runs, RunDir& run) {
  std::vector<std::pair<std::string, DiagnosticReport>> rows;
  Json sources = Json::array();
  for (const auto& dir : runs) {
    const fs::path p = fs::path(dir) / "report.json";
    const Json j = read_json_file(p.string());
    std::string name = j.value("method", std::string());
    if (name.empty()) name = fs::path(dir).filename().string();
    rows.emplace_back(name, report_from_json(j));
    sources.push_back(p.string());
  }
  run.write("staircase.csv", staircase_csv(rows));
  run.write("emergence.csv", emergence_csv(rows));
  run.finish("report", {{"runs", sources}}, 0);
  std::cout << staircase_csv(rows) << '\n' << emergence_csv(rows);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic prefix transforms over frozen embedding caches"};
  app.set_version_flag("--version", GRASP_VERSION);
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "worker threads for independent jobs")
      ->envname("GRASP_THREADS")
      ->check(CLI::PositiveNumber);

  std::string out;
  const auto add_out = [&](CLI::App* cmd, bool required) {
    auto* o = cmd->add_option("--out", out, "run directory");
    if (required) o->required();
  };

  auto* synth = app.add_subcommand("synth", "generate the planted-factor synthetic cache");
  std::string spec_path;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--spec", spec_path, "synthetic spec (JSON)");
  synth->add_option("--seed", synth_seed, "seed (overrides the --spec seed)");
  add_out(synth, true);

  auto* validate = app.add_subcommand("validate", "audit annotation rows and/or a cache");
  std::string annotations, captions, validate_cache;
  validate->add_option("--annotations", annotations, "annotation JSON lines");
  validate->add_option("--captions", captions, "source captions (JSON id -> caption)");
  validate->add_option("--cache", validate_cache, "cache manifest.json");
  add_out(validate, true);

  auto* train_cmd = app.add_subcommand("train", "train a transform");
  TrainFlags train_flags;
  add_train_flags(train_cmd, train_flags);
  add_out(train_cmd, true);

  auto* eval = app.add_subcommand("eval", "diagnose a checkpoint or baseline");
  EvalFlags eval_flags;
  eval->add_option("--cache", eval_flags.cache, "cache manifest.json")->required();
  eval->add_option("--checkpoint", eval_flags.checkpoint, "checkpoint file");
  eval->add_option("--baseline", eval_flags.baseline, "identity, pca or random_rotation");
  eval->add_option("--config", eval_flags.config, "contract override (JSON)");
  eval->add_option("--pool", eval_flags.pool, "full, test_only");
  eval->add_option("--split", eval_flags.split, "query split");
  eval->add_option("--labels", eval_flags.labels, "CSV id,label for rank statistics");
  eval->add_option("--seed", eval_flags.seed, "seed for sampled drift pairs and random baselines");
  add_out(eval, true);

  auto* compare = app.add_subcommand("compare", "method comparison grid");
  TrainFlags compare_flags;
  std::string methods;
  double loose_gate = 2.0;
  add_train_flags(compare, compare_flags);
  compare->add_option("--methods", methods, "comma-separated subset");
  compare->add_option("--loose-drift-gate", loose_gate, "selection gate for non-orthogonal methods");
  add_out(compare, true);

  auto* kappa = app.add_subcommand("kappa", "boundary sensitivity grid");
  TrainFlags kappa_flags;
  std::string kappa_variants;
  add_train_flags(kappa, kappa_flags);
  kappa->add_option("--variants", kappa_variants, "comma-separated subset");
  add_out(kappa, true);

  auto* pool = app.add_subcommand("pool", "candidate-pool sensitivity");
  std::string pool_cache, pool_checkpoint, pools = "full,test_only", pool_split = "test";
  pool->add_option("--cache", pool_cache, "cache manifest.json")->required();
  pool->add_option("--checkpoint", pool_checkpoint, "checkpoint file")->required();
  pool->add_option("--pools", pools, "comma-separated pool modes");
  pool->add_option("--split", pool_split, "query split");
  add_out(pool, true);

  auto* cost = app.add_subcommand("cost", "scaling cost estimate");
  int cost_dim = 512, precision = 2;
  std::uint64_t gallery = 10000000;
  cost->add_option("--dim", cost_dim, "embedding dimension");
  cost->add_option("--gallery", gallery, "gallery size");
  cost->add_option("--precision", precision, "bytes per stored value");
  add_out(cost, false);

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  int gc_dim = 8, gc_batch = 4;
  std::uint64_t gc_seed = 0;
  double gc_step = 1e-5, gc_tol = 1e-4;
  gradcheck->add_option("--dim", gc_dim, "dimension (multiple of 8)");
  gradcheck->add_option("--seed", gc_seed, "seed");
  gradcheck->add_option("--batch", gc_batch, "batch size");
  gradcheck->add_option("--step", gc_step, "central-difference step");
  gradcheck->add_option("--tolerance", gc_tol, "maximum relative error");
  add_out(gradcheck, false);

  auto* report = app.add_subcommand("report", "aggregate eval runs into decomposition tables");
  std::vector<std::string> runs;
  report->add_option("--runs", runs, "eval run directories")->required();
  add_out(report, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kExitUsage, "USAGE", e.what());
  }

  try {
    RunDir run(out);
    if (*synth) return cmd_synth(spec_path, synth_seed, run);
    if (*validate) return cmd_validate(annotations, captions, validate_cache, run);
    if (*train_cmd) return cmd_train(train_flags, run);
    if (*eval) return cmd_eval(eval_flags, run);
    if (*compare) return cmd_compare(compare_flags, methods, threads, loose_gate, run);
    if (*kappa) return cmd_kappa(kappa_flags, kappa_variants, threads, run);
    if (*pool) return cmd_pool(pool_cache, pool_checkpoint, pools, pool_split, run);
    if (*cost) return cmd_cost(cost_dim, gallery, precision, run);
    if (*gradcheck) return cmd_gradcheck(gc_dim, gc_seed, gc_batch, gc_step, gc_tol, run);
    if (*report) return cmd_report(runs, run);
  } catch (const Error& e) {
    const int code = exit_code(e.code());
    std::string msg = e.what();
    const std::string prefix = std::string(to_string(e.code())) + ": ";
    if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
    return fail(code, to_string(e.code()), msg);
  } catch (const std::exception& e) {
    return fail(kExitRuntime, "RUNTIME", e.what());
  }
  return fail(kExitUsage, "USAGE", "no verb given");
}
