#pragma once

#include "grasp/common.hpp"
#include "grasp/orthogonal.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace grasp {

/// Transform families. The first three carry no trainable parameters.
enum class Variant {
  kIdentity,
  kPca,
  kRandomRotation,
  kDenseCayley,
  kButterfly,
  kPermutation,
  kSignedPermutation,
  kLowRank,
  kMlp,
};

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);  // throws kUnknownVariant

struct TransformSpec {
  Variant variant = Variant::kDenseCayley;
  int butterfly_stacks = 8;
  int adaptor_rank = 32;
  int sinkhorn_iterations = 20;
  double sinkhorn_temperature = 1.0;

  bool operator==(const TransformSpec&) const = default;
};

/// Trainable scalar count: dense D^2+|K|; butterfly s*(D/2)*log2(D)+|K|;
/// permutation D^2+|K|; signed permutation D^2+D+|K|; low-rank
/// D^2+2*D*r+1+|K|; MLP 2*D*2D+2D+D+2*2D+|K|; fixed variants 0.
std::size_t param_count(const TransformSpec& spec, int dim, int num_prefixes);

struct ParamBlock {
  std::string name;
  Matrix value;
};

/// Named parameter blocks plus per-prefix log-temperatures. Gradients use the
/// same container shape.
struct ParamSet {
  std::vector<ParamBlock> blocks;
  Vector log_temperatures;

  std::size_t scalar_count() const;
  ParamSet zeros_like() const;
  Matrix& block(std::string_view name);
  const Matrix& block(std::string_view name) const;
  /// Blocks in declared order, then log-temperatures.
  Vector flatten() const;
  void assign(const Vector& flat);
  bool all_finite() const;
};

/// Row-wise transform used at evaluation time (permutations hardened).
class Transform {
 public:
  struct Mlp {
    Matrix W1, W2;
    Vector b1, b2, scale, shift;
  };

  static Transform identity(int dim);
  static Transform linear(Matrix W, Provenance provenance, bool orthogonal);
  static Transform from(const OrthogonalTransform& t) { return linear(t.R, t.provenance, true); }
  static Transform mlp(Mlp weights);

  int dim() const { return dim_; }
  bool is_orthogonal() const { return orthogonal_; }
  bool is_linear() const { return !mlp_.has_value(); }
  /// The D x D map (e -> W e) for linear transforms.
  const Matrix& matrix() const;
  std::string_view provenance() const;

  /// Maps the rows of an N x D matrix. Throws kDimMismatch.
  Matrix apply(const Matrix& rows) const;
  MatrixF apply(const MatrixF& rows) const;

 private:
  int dim_ = 0;
  bool orthogonal_ = false;
  Matrix W_;
  Provenance provenance_ = Provenance::kIdentity;
  std::optional<Mlp> mlp_;
};

/// A trainable transform: spec, dimension and current parameters.
class TransformModel {
 public:
  /// Intermediate values kept from forward for backward.
  struct Tape {
    Matrix W;                          // linear variants: training-time map
    Matrix R;                          // Cayley / butterfly part
    Matrix P;                          // relaxed permutation
    std::vector<Matrix> sinkhorn;      // log-domain half-step outputs
    Matrix H, U, A;                    // MLP pre-activation, scaled, activated
  };

  TransformModel() = default;
  TransformModel(TransformSpec spec, int dim, ParamSet params);

  /// Seeded initialization; Cayley/butterfly start at R = I plus 1e-3 noise,
  /// permutations near identity, adaptors with a closed gate, MLP near identity.
  static TransformModel initialize(const TransformSpec& spec, int dim, int num_prefixes, std::uint64_t seed,
                                   double init_temperature = 0.07);

  const TransformSpec& spec() const { return spec_; }
  int dim() const { return dim_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  bool is_linear() const { return spec_.variant != Variant::kMlp; }
  /// Evaluation-time map is orthogonal (Cayley, butterfly, hardened permutations).
  bool orthogonal_family() const;
  /// Linear at training time but not constrained orthogonal: the ortho monitor applies.
  bool unconstrained_linear() const;

  /// Z = F(X) row-wise.
  Matrix forward(const Matrix& X, Tape& tape) const;
  /// Accumulates parameter gradients from dL/dZ and an extra dL/dW (linear only).
  void backward(const Tape& tape, const Matrix& X, const Matrix& grad_Z, const Matrix* grad_W,
                ParamSet& grad) const;

  Transform evaluation_transform() const;

 private:
  TransformSpec spec_;
  int dim_ = 0;
  ParamSet params_;
};

}  // namespace grasp
