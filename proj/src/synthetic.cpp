#include "grasp/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <string>

namespace grasp {

namespace {

constexpr std::array<const char*, 8> kObjects = {"dog", "cat", "car", "tree", "boat", "horse", "chair", "kite"};
constexpr std::array<const char*, 8> kAttributes = {"red", "blue", "green", "small", "large", "wooden", "striped", "old"};
constexpr std::array<const char*, 8> kRelations = {"on a table", "near a wall", "under a bridge", "beside a bench",
                                                   "in a field", "behind a fence", "over a river", "inside a room"};

template <std::size_t N>
std::string word(const std::array<const char*, N>& list, int value, const char* fallback) {
  if (value < static_cast<int>(N)) return list[static_cast<std::size_t>(value)];
  return std::string(fallback) + std::to_string(value);
}

int other_value(int current, int cardinality, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, cardinality - 2);
  const int v = pick(rng);
  return v >= current ? v + 1 : v;
}

class Generator {
 public:
  Generator(const SyntheticSpec& spec) : spec_(spec), rng_(spec.seed) {
    offsets_[0] = 0;
    for (int b = 0; b < 3; ++b) offsets_[b + 1] = offsets_[b] + spec.blocks[b];
  }

  Vector block_latent(int size) {
    Vector v(size);
    double scale = 1.0;
    for (int j = 0; j < size; ++j) {
      v(j) = normal_(rng_) * scale;
      scale *= spec_.block_decay;
    }
    const double n = v.norm();
    return n > 0 ? Vector(v / n) : v;
  }

  Vector compose(const Vector* object, const Vector* attribute, const Vector* relation, const Vector* residual) const {
    Vector z = Vector::Zero(spec_.dim);
    const std::array<const Vector*, 4> parts{object, attribute, relation, residual};
    for (int b = 0; b < 4; ++b) {
      if (parts[b]) z.segment(offsets_[b], spec_.blocks[b]) = spec_.block_weights[b] * *parts[b];
    }
    return z;
  }

  std::mt19937_64& rng() { return rng_; }
  double normal() { return normal_(rng_); }

 private:
  const SyntheticSpec& spec_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::array<int, 4> offsets_{};
};

}  // namespace

void SyntheticSpec::validate() const {
  if (dim < 1) throw Error(ErrorCode::kConfig, "synthetic dim must be positive");
  int total = 0;
  for (int b : blocks) {
    if (b < 1) throw Error(ErrorCode::kConfig, "every block needs at least one coordinate");
    total += b;
  }
  if (total > dim) {
    throw Error(ErrorCode::kBlockOverflow,
                "block sizes sum to " + std::to_string(total) + " which exceeds D=" + std::to_string(dim));
  }
  if (total != dim) throw Error(ErrorCode::kConfig, "block sizes must sum to D");
  for (int c : cardinalities) {
    if (c < 2) throw Error(ErrorCode::kConfig, "factor cardinalities must be >= 2");
  }
  if (!(noise_std >= 0) || !std::isfinite(noise_std)) throw Error(ErrorCode::kConfig, "noise_std must be >= 0");
  if (n_examples < 1) throw Error(ErrorCode::kConfig, "n_examples must be >= 1");
  if (!(block_decay > 0) || block_decay > 1) throw Error(ErrorCode::kConfig, "block_decay must lie in (0, 1]");
  for (double w : block_weights) {
    if (!(w > 0) || !std::isfinite(w)) throw Error(ErrorCode::kConfig, "block weights must be positive");
  }
  if (train_fraction < 0 || val_fraction < 0 || train_fraction + val_fraction > 1) {
    throw Error(ErrorCode::kConfig, "split fractions must be nonnegative and sum to at most 1");
  }
}

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Generator gen(spec);
  const int D = spec.dim;
  const int n = spec.n_examples;

  SyntheticCorpus out;
  const OrthogonalTransform mixing = random_orthogonal(D, gen.rng()());
  out.oracle = {mixing.R.transpose(), Provenance::kRandom};

  std::array<std::vector<Vector>, 3> codebooks;
  for (int f = 0; f < 3; ++f) {
    for (int c = 0; c < spec.cardinalities[f]; ++c) codebooks[f].push_back(gen.block_latent(spec.blocks[f]));
  }

  EmbeddingCache& cache = out.cache;
  cache.dim = D;
  cache.image.resize(n, D);
  for (auto& m : cache.text) m.resize(n, D);
  for (auto& m : cache.negatives) m.resize(n, D);

  const auto store = [&](MatrixF& target, int row, const Vector& latent) {
    const Vector mixed = mixing.R * latent;
    target.row(row) = (mixed / mixed.norm()).transpose().cast<float>();
  };

  out.factors.resize(static_cast<std::size_t>(n));
  out.rows.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::array<int, 3> v{};
    for (int f = 0; f < 3; ++f) {
      v[f] = std::uniform_int_distribution<int>(0, spec.cardinalities[f] - 1)(gen.rng());
    }
    out.factors[static_cast<std::size_t>(i)] = v;
    const Vector& o = codebooks[0][static_cast<std::size_t>(v[0])];
    const Vector& a = codebooks[1][static_cast<std::size_t>(v[1])];
    const Vector& r = codebooks[2][static_cast<std::size_t>(v[2])];
    const Vector residual = gen.block_latent(spec.blocks[3]);

    Vector image = gen.compose(&o, &a, &r, &residual);
    for (int j = 0; j < D; ++j) image(j) += spec.noise_std * gen.normal();
    store(cache.image, i, image);
    store(cache.text[0], i, gen.compose(&o, nullptr, nullptr, nullptr));
    store(cache.text[1], i, gen.compose(&o, &a, nullptr, nullptr));
    store(cache.text[2], i, gen.compose(&o, &a, &r, nullptr));
    store(cache.text[3], i, gen.compose(&o, &a, &r, &residual));

    const int o_neg = other_value(v[0], spec.cardinalities[0], gen.rng());
    const int a_neg = other_value(v[1], spec.cardinalities[1], gen.rng());
    std::array<int, 3> r_neg{};
    for (int& x : r_neg) x = other_value(v[2], spec.cardinalities[2], gen.rng());
    const Vector residual_neg = gen.block_latent(spec.blocks[3]);
    store(cache.negatives[index(NegType::kObject)], i,
          gen.compose(&codebooks[0][static_cast<std::size_t>(o_neg)], nullptr, nullptr, nullptr));
    store(cache.negatives[index(NegType::kAttribute)], i,
          gen.compose(&o, &codebooks[1][static_cast<std::size_t>(a_neg)], nullptr, nullptr));
    for (int t = 0; t < 3; ++t) {
      store(cache.negatives[index(NegType::kRelation) + t], i,
            gen.compose(&o, &a, &codebooks[2][static_cast<std::size_t>(r_neg[static_cast<std::size_t>(t)])], nullptr));
    }
    store(cache.negatives[index(NegType::kFull)], i, gen.compose(&o, &a, &r, &residual_neg));

    char id[32];
    std::snprintf(id, sizeof(id), "syn%06d", i);
    const std::string obj = word(kObjects, v[0], "object");
    const std::string attr = word(kAttributes, v[1], "attr");
    const std::string rel = word(kRelations, v[2], "relation ");
    const auto scene = [&](int s) {
      return "a " + attr + " " + obj + " " + rel + " in scene " + std::to_string(s);
    };
    AnnotationRow& row = out.rows[static_cast<std::size_t>(i)];
    row.id = id;
    row.dataset = "synthetic";
    row.caption = scene(i);
    row.entity = obj;
    row.views = {{"G0", obj}, {"G1", attr + " " + obj}, {"G2", attr + " " + obj + " " + rel}, {"G3", row.caption}};
    const std::string full_neg = scene(n + i);
    row.negatives = {
        {"object", word(kObjects, o_neg, "object")},
        {"attribute", word(kAttributes, a_neg, "attr") + " " + obj},
        {"relation", attr + " " + obj + " " + word(kRelations, r_neg[0], "relation ")},
        {"action", attr + " " + obj + " " + word(kRelations, r_neg[1], "relation ")},
        {"order", word(kRelations, r_neg[2], "relation ") + " " + attr + " " + obj},
        {"full", full_neg},
    };
    row.distractors = {full_neg};
  }

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), gen.rng());
  const auto n_train = static_cast<std::size_t>(std::floor(spec.train_fraction * n));
  const auto n_val = static_cast<std::size_t>(std::floor(spec.val_fraction * n));
  std::vector<Split> splits(static_cast<std::size_t>(n));
  for (std::size_t k = 0; k < order.size(); ++k) {
    splits[static_cast<std::size_t>(order[k])] = k < n_train ? Split::kTrain
                                                 : k < n_train + n_val ? Split::kVal
                                                                       : Split::kTest;
  }
  for (int i = 0; i < n; ++i) {
    AnnotationRow& row = out.rows[static_cast<std::size_t>(i)];
    row.split = splits[static_cast<std::size_t>(i)];
    cache.ids.push_back(row.id);
    cache.split_table[row.id] = row.split;
  }
  cache.validate();
  return out;
}

}  // namespace grasp
