#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lab/array.hpp"
#include "lab/tape.hpp"

namespace lab {

/// Lower clamp applied to probabilities before log / fractional powers.
inline constexpr double kProbFloor = 1e-12;

/// A point on the probability simplex, stored with entries clamped to
/// [kProbFloor, 1].
class ProbVector {
 public:
  /// Validates non-negativity and that the raw entries sum to 1 within 1e-9.
  explicit ProbVector(std::vector<double> values);

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t k) const { return values_[k]; }
  std::span<const double> values() const { return values_; }

 private:
  std::vector<double> values_;
};

enum class LossKind { cce, mae, lq };

struct LossSpec {
  LossKind kind = LossKind::cce;
  double q = 0.0;  // lq only

  static LossSpec cce() { return {LossKind::cce, 0.0}; }
  static LossSpec mae() { return {LossKind::mae, 0.0}; }
  static LossSpec lq(double q);

  /// Throws DomainError unless q is meaningful for the kind.
  void validate() const;
  /// Stable identifier used in results files: "cce", "mae", "lq(q=0.66)".
  std::string name() const;
};

/// Max-shifted softmax; total on finite input.
ProbVector softmax(std::span<const double> logits);

/// Index of the hot entry of a one-hot vector; throws on malformed input.
std::size_t hot_index(std::span<const double> one_hot);

double cce(const ProbVector& p, std::span<const double> one_hot);
double mae(const ProbVector& p, std::span<const double> one_hot);
double lq(const ProbVector& p, std::span<const double> one_hot, double q);

/// Loss of `p` against a class index.
double loss_value(const LossSpec& spec, const ProbVector& p, std::size_t label);

double cosine_sim(std::span<const double> a, std::span<const double> b);

/// Two views per sample. Row 2*i + j of `embeddings` holds z_{i,j}.
class ContrastiveBatch {
 public:
  ContrastiveBatch(Array embeddings, double temperature);
  ContrastiveBatch(const std::vector<std::vector<double>>& view0,
                   const std::vector<std::vector<double>>& view1, double temperature);

  const Array& embeddings() const { return embeddings_; }
  double temperature() const { return temperature_; }
  std::size_t samples() const { return embeddings_.dim(0) / 2; }

 private:
  Array embeddings_;
  double temperature_;
};

/// NT-Xent summed over all 2M anchors, with the self-similarity removed by
/// subtracting exp(1/tau) from each denominator.
double nt_xent(const ContrastiveBatch& batch);

/// Spread of sum_k loss(k, p) over the samples; 0 means the loss is
/// symmetric on the sampled set.
double symmetry_defect(const LossSpec& spec, std::span<const ProbVector> samples);

// Tape versions used by the trainers.

/// (B, K) one-hot matrix; throws if a label is >= num_classes.
Array one_hot(std::span<const int> labels, std::size_t num_classes);

Var log_softmax_rows(Var logits);
/// Per-sample losses as a (B,1) node. `targets` is a (B,K) one-hot constant.
Var cce_rows(Var logits, const Array& targets);
Var mae_rows(Var logits, const Array& targets);
Var lq_rows(Var logits, const Array& targets, double q);
Var loss_rows(const LossSpec& spec, Var logits, const Array& targets);

/// NT-Xent over (2M, d) rows ordered as in ContrastiveBatch.
Var nt_xent_loss(Var embeddings, double temperature);

}  // namespace lab
