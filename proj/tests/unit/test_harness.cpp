#include "grasp/config.hpp"
#include "grasp/harness.hpp"
#include "grasp/report.hpp"
#include "support.hpp"

#include <set>
#include <sstream>

using namespace grasp;

namespace {

const SyntheticCorpus& corpus() {
  static const SyntheticCorpus c = generate_synthetic(test::small_spec(400));
  return c;
}

GridConfig quick_grid(int threads = 1) {
  GridConfig g;
  g.train.contract = InterfaceContract::ratio(32);
  g.train.epochs = 4;
  g.train.batch_size = 64;
  g.train.lr_transform = 1e-2;
  g.train.warmup_epochs = 1;
  g.train.drift_rows = 200;
  g.eval.drift_rows = 200;
  g.threads = threads;
  return g;
}

}  // namespace

TEST_CASE("cost table reproduces the published scaling rows") {
  struct Row {
    int dim;
    const char* query;
    const char* offline;
    const char* s16;
    const char* s2;
    const char* s1;
    const char* params;
  };
  const Row rows[] = {{512, "0.26M", "2.62T", "0.64GB", "5.12GB", "10.24GB", "0.26M"},
                      {768, "0.59M", "5.90T", "0.96GB", "7.68GB", "15.36GB", "0.59M"},
                      {1024, "1.05M", "10.49T", "1.28GB", "10.24GB", "20.48GB", "1.05M"}};
  for (const Row& r : rows) {
    const CostEstimate c = estimate_cost(r.dim, 10000000, InterfaceContract::ratio(r.dim).prefixes, 2);
    const auto t = cost_table(c, 2);
    REQUIRE(t.size() == 6);
    CHECK(t[0].second == r.query);
    CHECK(t[1].second == r.offline);
    CHECK(t[2].second == r.s16);
    CHECK(t[3].second == r.s2);
    CHECK(t[4].second == r.s1);
    CHECK(t[5].second == r.params);
    CHECK(t[1].first == "10M offline transform ops");
  }
  CHECK(estimate_cost(512, 10, {512}, 4).storage_bytes[0].second == 20480.0);
  CHECK_THROWS_AS(estimate_cost(0, 10, {1}, 2), Error);
  CHECK_THROWS_AS(estimate_cost(16, 10, {32}, 2), Error);
}

TEST_CASE("kappa variants") {
  const auto v = default_kappa_variants(512);
  REQUIRE(v.size() == 4);
  CHECK(v[0].name == "default");
  CHECK(v[0].contract == InterfaceContract::ratio(512));
  CHECK(v[1].contract.kappa_of(NegType::kRelation) == 256);
  CHECK(v[1].contract.kappa_of(NegType::kOrder) == 256);
  CHECK(v[2].contract.kappa_of(NegType::kAttribute) == 128);
  CHECK(v[3].contract.kappa_of(NegType::kAttribute) == 64);
  CHECK(v[3].contract.kappa_of(NegType::kAction) == 64);
  for (const auto& k : v) k.contract.validate();
}

TEST_CASE("method catalogue") {
  const auto& names = method_names();
  CHECK(names.size() == 12);
  CHECK(names.front() == "frozen_full");
  CHECK(names.back() == "grasp_butterfly");
  const GridConfig g = quick_grid();
  CHECK_FALSE(method_train_config("direct_prefix", g).has_value());
  const auto mrl = method_train_config("mrl_style", g);
  REQUIRE(mrl.has_value());
  CHECK(mrl->contract.assigned_prefix(ViewLevel::kG0) == std::nullopt);
  CHECK(mrl->scoring_contract() == g.train.contract);
  CHECK(mrl->loss.lambda_rank == 0.0);
  const auto mlp = method_train_config("mlp_adapter", g);
  CHECK(mlp->transform.variant == Variant::kMlp);
  CHECK(mlp->drift_gate == 2.0);
  CHECK(method_train_config("grasp_dense", g)->drift_gate == g.train.drift_gate);
  try {
    method_train_config("nearest_neighbour", g);
    FAIL("expected UNKNOWN_METHOD");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnknownMethod);
  }
}

TEST_CASE("method comparison is deterministic across thread counts") {
  const std::vector<std::string> names = {"frozen_full", "direct_prefix", "pca_prefix", "random_rotation",
                                          "grasp_dense", "learned_permutation", "matryoshka_adaptor"};
  std::ostringstream log1, log2;
  const auto a = run_method_comparison(corpus().cache, quick_grid(1), names, &log1);
  const auto b = run_method_comparison(corpus().cache, quick_grid(3), names, &log2);
  REQUIRE(a.size() == names.size());
  CHECK(log1.str() == log2.str());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CAPTURE(names[i]);
    CHECK(a[i].name == names[i]);
    CHECK(to_json(a[i]) == to_json(b[i]));
  }
  // rows for parameter-free methods
  CHECK(a[0].params == 0);
  CHECK(a[0].drift == 0.0);
  CHECK_FALSE(a[0].emergence_mean.has_value());
  CHECK(a[1].drift == 0.0);
  CHECK(a[4].params == param_count({Variant::kDenseCayley}, 32, 5));
  CHECK(a[4].drift <= 1e-5);
  CHECK(a[5].drift <= 1e-5);
  // at k = D every orthogonal method scores the frozen caption retrieval exactly
  for (std::size_t i : {1u, 2u, 3u, 4u, 5u}) CHECK(a[i].full_caption_r1 == a[0].full_caption_r1);
}

TEST_CASE("default kappa row matches the method-comparison row") {
  GridConfig g = quick_grid();
  g.train.epochs = 3;
  const auto rows = run_method_comparison(corpus().cache, g, {"grasp_dense"});
  const auto kappa = run_kappa_sensitivity(corpus().cache, g, {default_kappa_variants(32)[0]});
  REQUIRE(kappa.size() == 1);
  CHECK(kappa[0].hard_avg == rows[0].hard_avg);
  CHECK(kappa[0].default_stair == rows[0].stair);
  CHECK(kappa[0].drift == rows[0].drift);
  CHECK(kappa[0].attribute_kappa == 4);
  CHECK(kappa[0].relation_kappa == 8);
}

TEST_CASE("pool sensitivity") {
  const InterfaceContract c = InterfaceContract::ratio(32);
  const Transform t = Transform::from(corpus().oracle);
  const auto rows = run_pool_sensitivity(corpus().cache, t, c, {PoolMode::kFull, PoolMode::kTestOnly});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].hard == rows[1].hard);
  for (int v = 0; v < 4; ++v) CHECK(rows[1].recall[v] >= rows[0].recall[v]);
  for (const auto& r : rows) {
    CHECK(r.staircase.stair == doctest::Approx(0.5 * (r.staircase.ret_avg + r.staircase.hard_avg)));
  }
}

TEST_CASE("gradient check covers every trainable variant") {
  CHECK(gradcheck_contract(32) == InterfaceContract::ratio(32));
  const InterfaceContract c8 = gradcheck_contract(8);
  CHECK(c8.prefixes == std::vector<int>{2, 3, 4, 6, 8});
  c8.validate();
  const auto rows = run_gradcheck(8, 3);
  std::set<std::string> variants;
  for (const auto& r : rows) {
    CAPTURE(r.variant);
    CAPTURE(r.term);
    variants.insert(r.variant);
    CHECK(r.coordinates > 0);
    CHECK(r.max_relative_error <= 1e-4);
  }
  CHECK(variants.size() == 6);
  CHECK(std::count_if(rows.begin(), rows.end(), [](const auto& r) { return r.term == "total"; }) == 6);
}

TEST_CASE("report JSON round trip") {
  DiagnosticOptions opt;
  opt.drift_rows = 100;
  const DiagnosticReport r = diagnose(corpus().cache, Transform::from(corpus().oracle), InterfaceContract::ratio(32), opt);
  const DiagnosticReport back = report_from_json(to_json(r));
  CHECK(back.recall == r.recall);
  CHECK(back.sel.values == r.sel.values);
  CHECK(back.staircase.stair == r.staircase.stair);
  CHECK(back.emergence.mean == r.emergence.mean);
  const std::string csv = staircase_csv({{"oracle", r}});
  CHECK(csv.rfind("Method,Obj. R@1", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
  CHECK(emergence_csv({{"oracle", r}}).rfind("Method,Attr.,Relation,Action,Order,Full,Mean\n", 0) == 0);
}
