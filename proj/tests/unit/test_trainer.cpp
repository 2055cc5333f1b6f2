#include "grasp/checkpoint.hpp"
#include "grasp/config.hpp"
#include "grasp/trainer.hpp"
#include "support.hpp"

#include <fstream>
#include <sstream>

using namespace grasp;

namespace {

using Mask = std::array<bool, kNumNegTypes>;
constexpr Mask kNone{};
constexpr Mask kObj{true, false, false, false, false, false};
constexpr Mask kObjAttr{true, true, false, false, false, false};
constexpr Mask kNoFull{true, true, true, true, true, false};
constexpr Mask kAll{true, true, true, true, true, true};

TrainConfig quick_config(int dim = 32) {
  TrainConfig c;
  c.contract = InterfaceContract::ratio(dim);
  c.epochs = 5;
  c.batch_size = 64;
  c.lr_transform = 1e-2;
  c.warmup_epochs = 1;
  c.drift_rows = 200;
  return c;
}

const EmbeddingCache& small_cache() {
  static const EmbeddingCache cache = generate_synthetic(test::small_spec(400)).cache;
  return cache;
}

}  // namespace

TEST_CASE("curriculum masks unlock groups in order") {
  CHECK(curriculum_mask(Curriculum::kDefault, 3, 0) == kNone);
  CHECK(curriculum_mask(Curriculum::kDefault, 3, 2) == kNone);
  CHECK(curriculum_mask(Curriculum::kDefault, 3, 3) == kObj);
  CHECK(curriculum_mask(Curriculum::kDefault, 3, 4) == kObjAttr);
  CHECK(curriculum_mask(Curriculum::kDefault, 3, 5) == kNoFull);
  CHECK(curriculum_mask(Curriculum::kDefault, 3, 6) == kAll);
  CHECK(curriculum_mask(Curriculum::kDefault, 3, 50) == kAll);
  CHECK(curriculum_mask(Curriculum::kAllAfterWarmup, 2, 1) == kNone);
  CHECK(curriculum_mask(Curriculum::kAllAfterWarmup, 2, 2) == kAll);
  CHECK(curriculum_mask(Curriculum::kSlow, 0, 0) == kObj);
  CHECK(curriculum_mask(Curriculum::kSlow, 0, 1) == kObj);
  CHECK(curriculum_mask(Curriculum::kSlow, 0, 2) == kObjAttr);
  CHECK(curriculum_mask(Curriculum::kNone, 5, 0) == kAll);
  CHECK(parse_curriculum("slow") == Curriculum::kSlow);
  CHECK_THROWS_AS(parse_curriculum("fast"), Error);
}

TEST_CASE("curriculum masks only grow") {
  for (Curriculum c : {Curriculum::kDefault, Curriculum::kAllAfterWarmup, Curriculum::kSlow, Curriculum::kNone}) {
    for (int warmup = 0; warmup < 4; ++warmup) {
      for (int e = 1; e < 20; ++e) {
        const Mask before = curriculum_mask(c, warmup, e - 1), now = curriculum_mask(c, warmup, e);
        for (int t = 0; t < kNumNegTypes; ++t) CHECK((!before[t] || now[t]));
      }
    }
  }
}

TEST_CASE("checkpoint selection") {
  const std::vector<CheckpointCandidate> c = {{0, 50, 1e-7}, {1, 70, 1e-3}, {2, 60, 1e-6}, {3, 60, 1e-7}};
  CHECK(select_checkpoint(c, 1e-5) == 2);  // epoch 1 fails the gate; tie goes to epoch 2
  CHECK(select_checkpoint(c, 1e-2) == 1);
  CHECK(select_checkpoint({{0, 10, 0.0}}, 1e-5) == 0);
  try {
    select_checkpoint(c, 1e-8);
    FAIL("expected NO_VALID_CHECKPOINT");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNoValidCheckpoint);
  }
  CHECK_THROWS_AS(select_checkpoint({{0, 10, std::nan("")}}, 1.0), Error);
}

TEST_CASE("selection is a running maximum over gated epochs") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<CheckpointCandidate> c;
    for (int e = 0; e < 12; ++e) c.push_back({e, std::round(u(rng) * 20), u(rng) < 0.3 ? 1.0 : 1e-7});
    double best = -1;
    std::optional<std::size_t> arg;
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (c[i].drift <= 1e-5 && c[i].stair > best) {
        best = c[i].stair;
        arg = i;
      }
    }
    if (arg) {
      CHECK(select_checkpoint(c, 1e-5) == *arg);
    } else {
      CHECK_THROWS_AS(select_checkpoint(c, 1e-5), Error);
    }
  }
}

TEST_CASE("train config validation") {
  TrainConfig c = quick_config();
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = quick_config();
  c.drift_gate = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = quick_config();
  c.selection_contract = InterfaceContract::ratio(64);
  CHECK_THROWS_AS(c.validate(), Error);
  quick_config().validate();
}

TEST_CASE("Adam takes a bias-corrected first step of size lr") {
  ParamSet p;
  p.blocks.push_back({"w", Matrix::Constant(2, 1, 1.0)});
  p.log_temperatures = Vector::Zero(1);
  ParamSet g = p.zeros_like();
  g.blocks[0].value << 3.0, -0.5;
  g.log_temperatures << 2.0;
  Adam adam(p, 0.1, 0.01);
  adam.step(p, g);
  CHECK(p.blocks[0].value(0) == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(p.blocks[0].value(1) == doctest::Approx(1.1).epsilon(1e-6));
  CHECK(p.log_temperatures(0) == doctest::Approx(-0.01).epsilon(1e-6));
}

TEST_CASE("training is deterministic and records the curriculum") {
  const TrainConfig cfg = quick_config();
  std::ostringstream log_a, log_b;
  const Checkpoint a = train(cfg, small_cache(), &log_a);
  const Checkpoint b = train(cfg, small_cache(), &log_b);
  CHECK(a.model.params().flatten() == b.model.params().flatten());
  CHECK(log_a.str() == log_b.str());
  CHECK(a.epoch == b.epoch);
  REQUIRE(a.trace.size() == 5);
  // warmup: no hinge terms
  CHECK(a.trace[0].terms.rank == 0.0);
  CHECK(a.trace[0].terms.invariance == 0.0);
  CHECK(a.trace[0].enabled == kNone);
  CHECK(a.trace[1].enabled == kObj);
  CHECK(a.trace[4].enabled == kAll);
  CHECK(a.trace[4].terms.rank > 0.0);
  // the selected epoch carries the best gated validation staircase
  double best = -1;
  for (const auto& r : a.trace) {
    if (r.val_drift <= cfg.drift_gate) best = std::max(best, r.val_stair);
  }
  CHECK(a.val_stair == best);
  CHECK(a.trace[static_cast<std::size_t>(a.epoch)].val_stair == best);
  CHECK(a.val_drift <= 1e-5);
  const std::string text = log_a.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);
}

TEST_CASE("a different seed gives a different model") {
  TrainConfig cfg = quick_config();
  cfg.epochs = 1;
  const Checkpoint a = train(cfg, small_cache());
  cfg.seed = 1;
  const Checkpoint b = train(cfg, small_cache());
  CHECK_FALSE(a.model.params().flatten() == b.model.params().flatten());
}

TEST_CASE("training improves the validation staircase") {
  TrainConfig cfg = quick_config();
  const Checkpoint ck = train(cfg, small_cache());
  const double identity = validation_score(small_cache(), Transform::identity(32), cfg.contract).staircase.stair;
  CHECK(ck.val_stair > identity);
}

TEST_CASE("an exploding step size is reported as divergence") {
  TrainConfig cfg = quick_config();
  cfg.epochs = 1;
  cfg.transform.variant = Variant::kMlp;
  cfg.lr_transform = 1e200;
  try {
    train(cfg, small_cache());
    FAIL("expected DIVERGED");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDiverged);
  }
}

TEST_CASE("training needs train and validation rows") {
  EmbeddingCache c = small_cache();
  for (auto& [id, split] : c.split_table) {
    if (split == Split::kVal) split = Split::kTest;
  }
  CHECK_THROWS_AS(train(quick_config(), c), Error);
  CHECK_THROWS_AS(train(quick_config(64), small_cache()), Error);
}

TEST_CASE("config JSON round trip") {
  TrainConfig c = quick_config(64);
  c.transform.variant = Variant::kButterfly;
  c.transform.butterfly_stacks = 4;
  c.loss.margins[2] = 0.2;
  c.loss.tolerances[5] = 0.01;
  c.loss.lambda_pres = 3.0;
  c.curriculum = Curriculum::kSlow;
  c.contract = c.contract.with_kappa(NegType::kRelation, 32);
  c.seed = 9;
  const Json j = to_json(c);
  const TrainConfig back = train_config_from_json(j, 64);
  CHECK(to_json(back) == j);
  CHECK(back.contract == c.contract);
  CHECK(back.transform == c.transform);
  CHECK(back.loss.margins == c.loss.margins);
  CHECK(back.curriculum == Curriculum::kSlow);
  CHECK(back.seed == 9);
}

TEST_CASE("config readers") {
  const TrainConfig d = train_config_from_json(Json::object(), 64);
  CHECK(d.contract == InterfaceContract::ratio(64));
  const TrainConfig m = train_config_from_json(Json::parse(R"({"ranking_margins": 0.3,
      "invariance_tolerances": {"full": 0.2}, "transform": {"variant": "permutation"}})"), 64);
  CHECK(m.loss.margins[3] == 0.3);
  CHECK(m.loss.tolerances[5] == 0.2);
  CHECK(m.loss.tolerances[0] == 0.05);
  CHECK(m.transform.variant == Variant::kPermutation);
  const auto code = [](const char* text, int dim) {
    try {
      train_config_from_json(Json::parse(text), dim);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kUsage;
  };
  CHECK(code(R"({"learning_rate": 1})", 64) == ErrorCode::kConfig);
  CHECK(code(R"({"epochs": "many"})", 64) == ErrorCode::kConfig);
  CHECK(code(R"({"dim": 32})", 64) == ErrorCode::kDimMismatch);
  CHECK(code(R"({"transform": {"variant": "spline"}})", 64) == ErrorCode::kUnknownVariant);
  const SyntheticSpec s = test::small_spec();
  CHECK(synthetic_from_json(to_json(s)) == s);
}

TEST_CASE("checkpoint round trip is bit-identical") {
  TrainConfig cfg = quick_config();
  cfg.epochs = 2;
  for (Variant v : {Variant::kDenseCayley, Variant::kSignedPermutation, Variant::kMlp}) {
    cfg.transform.variant = v;
    cfg.drift_gate = v == Variant::kMlp ? 2.0 : 1e-5;
    const Checkpoint ck = train(cfg, small_cache());
    const auto path = (test::temp_dir("ckpt") / "model.grsp").string();
    save_checkpoint(ck, path);
    const Checkpoint back = load_checkpoint(path);
    CAPTURE(to_string(v));
    CHECK(back.model.spec() == ck.model.spec());
    CHECK(back.model.params().flatten() == ck.model.params().flatten());
    CHECK(back.contract == ck.contract);
    CHECK(back.epoch == ck.epoch);
    CHECK(back.val_stair == ck.val_stair);
    CHECK(back.trace.size() == ck.trace.size());
    const auto path2 = (test::temp_dir("ckpt2") / "model.grsp").string();
    save_checkpoint(back, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), {}), b2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(b1 == b2);
  }
}

TEST_CASE("corrupt checkpoints are rejected") {
  TrainConfig cfg = quick_config();
  cfg.epochs = 1;
  const auto dir = test::temp_dir("ckpt_bad");
  const auto path = (dir / "model.grsp").string();
  save_checkpoint(train(cfg, small_cache()), path);
  std::ifstream in(path, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), {});
  const auto code_for = [&](const std::string& content) {
    const auto p = (dir / "bad.grsp").string();
    std::ofstream(p, std::ios::binary) << content;
    try {
      load_checkpoint(p);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kUsage;
  };
  CHECK(code_for("NOTACKPT" + bytes.substr(8)) == ErrorCode::kMalformed);
  CHECK(code_for(bytes.substr(0, bytes.size() - 8)) == ErrorCode::kMalformed);
  CHECK(code_for(bytes + "x") == ErrorCode::kMalformed);
  CHECK_THROWS_AS(load_checkpoint((dir / "missing.grsp").string()), Error);
}
