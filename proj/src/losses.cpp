#include "lab/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "lab/error.hpp"
#include "lab/kernels.hpp"

namespace lab {

ProbVector::ProbVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw DomainError("ProbVector: empty");
  double total = 0.0;
  for (double v : values_) {
    if (!std::isfinite(v) || v < 0.0) {
      throw DomainError("ProbVector: entry " + std::to_string(v) + " is not a probability");
    }
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw DomainError("ProbVector: entries sum to " + std::to_string(total));
  }
  for (double& v : values_) v = std::clamp(v, kProbFloor, 1.0);
}

LossSpec LossSpec::lq(double q) {
  LossSpec s{LossKind::lq, q};
  s.validate();
  return s;
}

void LossSpec::validate() const {
  if (kind == LossKind::lq) {
    if (!(q > 0.0 && q <= 1.0)) {
      throw DomainError("lq: q must lie in (0, 1], got " + std::to_string(q));
    }
  } else if (q != 0.0) {
    throw DomainError("q is only meaningful for the lq loss");
  }
}

std::string LossSpec::name() const {
  switch (kind) {
    case LossKind::cce: return "cce";
    case LossKind::mae: return "mae";
    case LossKind::lq: {
      char buf[64];
      std::snprintf(buf, sizeof buf, "lq(q=%g)", q);
      return buf;
    }
  }
  return "?";
}

ProbVector softmax(std::span<const double> logits) {
  if (logits.empty()) throw DomainError("softmax: empty logits");
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    p[k] = std::exp(logits[k] - m);
    z += p[k];
  }
  for (double& v : p) v /= z;
  return ProbVector(std::move(p));
}

std::size_t hot_index(std::span<const double> one_hot) {
  std::size_t hot = one_hot.size();
  for (std::size_t k = 0; k < one_hot.size(); ++k) {
    if (one_hot[k] == 1.0 && hot == one_hot.size()) {
      hot = k;
    } else if (one_hot[k] != 0.0) {
      throw DomainError("label vector is not one-hot (entry " + std::to_string(k) + ")");
    }
  }
  if (hot == one_hot.size()) throw DomainError("label vector has no hot entry");
  return hot;
}

namespace {

double label_prob(const ProbVector& p, std::span<const double> one_hot) {
  if (one_hot.size() != p.size()) {
    throw DomainError("label length " + std::to_string(one_hot.size()) +
                      " differs from class count " + std::to_string(p.size()));
  }
  return p[hot_index(one_hot)];
}

double cce_of(double py) { return -std::log(py); }
double mae_of(double py) { return 1.0 - py; }
double lq_of(double py, double q) { return (1.0 - std::pow(py, q)) / q; }

}  // namespace

double cce(const ProbVector& p, std::span<const double> one_hot) {
  return cce_of(label_prob(p, one_hot));
}

double mae(const ProbVector& p, std::span<const double> one_hot) {
  return mae_of(label_prob(p, one_hot));
}

double lq(const ProbVector& p, std::span<const double> one_hot, double q) {
  LossSpec::lq(q);
  return lq_of(label_prob(p, one_hot), q);
}

double loss_value(const LossSpec& spec, const ProbVector& p, std::size_t label) {
  if (label >= p.size()) throw DomainError("label " + std::to_string(label) + " out of range");
  const double py = p[label];
  switch (spec.kind) {
    case LossKind::cce: return cce_of(py);
    case LossKind::mae: return mae_of(py);
    case LossKind::lq: spec.validate(); return lq_of(py, spec.q);
  }
  return 0.0;
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_sim: length mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (!(aa > 0.0)) throw DomainError("cosine_sim: argument 0 has zero norm");
  if (!(bb > 0.0)) throw DomainError("cosine_sim: argument 1 has zero norm");
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

namespace {

void check_embeddings(const Array& z, double temperature) {
  if (!(temperature > 0.0)) {
    throw DomainError("nt_xent: temperature must be positive, got " + std::to_string(temperature));
  }
  if (z.rank() != 2 || z.dim(0) < 2 || z.dim(0) % 2 != 0) {
    throw ShapeError("nt_xent: expected (2M, d) embeddings, got " + shape_str(z.shape()));
  }
  const Array norms = kernels::l2norm_last(z);
  for (std::size_t r = 0; r < norms.size(); ++r) {
    if (!(norms[r] > 0.0)) {
      throw DomainError("nt_xent: embedding z(" + std::to_string(r / 2) + "," +
                        std::to_string(r % 2) + ") has zero norm");
    }
  }
}

}  // namespace

ContrastiveBatch::ContrastiveBatch(Array embeddings, double temperature)
    : embeddings_(std::move(embeddings)), temperature_(temperature) {
  check_embeddings(embeddings_, temperature_);
}

ContrastiveBatch::ContrastiveBatch(const std::vector<std::vector<double>>& view0,
                                   const std::vector<std::vector<double>>& view1,
                                   double temperature)
    : temperature_(temperature) {
  if (view0.size() != view1.size() || view0.empty()) {
    throw ShapeError("ContrastiveBatch: need the same nonzero number of views on both sides");
  }
  const std::size_t d = view0[0].size();
  std::vector<double> rows;
  rows.reserve(2 * view0.size() * d);
  for (std::size_t i = 0; i < view0.size(); ++i) {
    if (view0[i].size() != d || view1[i].size() != d) {
      throw ShapeError("ContrastiveBatch: ragged embeddings at sample " + std::to_string(i));
    }
    rows.insert(rows.end(), view0[i].begin(), view0[i].end());
    rows.insert(rows.end(), view1[i].begin(), view1[i].end());
  }
  embeddings_ = Array({2 * view0.size(), d}, std::move(rows));
  check_embeddings(embeddings_, temperature_);
}

double nt_xent(const ContrastiveBatch& batch) {
  Tape tape;
  return nt_xent_loss(tape.constant(batch.embeddings()), batch.temperature()).value().item();
}

double symmetry_defect(const LossSpec& spec, std::span<const ProbVector> samples) {
  if (samples.empty()) throw DomainError("symmetry_defect: empty sample set");
  spec.validate();
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const ProbVector& p : samples) {
    double total = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) total += loss_value(spec, p, k);
    lo = std::min(lo, total);
    hi = std::max(hi, total);
  }
  return hi - lo;
}

Array one_hot(std::span<const int> labels, std::size_t num_classes) {
  std::vector<double> out(labels.size() * num_classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw DomainError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                        " outside [0, " + std::to_string(num_classes) + ")");
    }
    out[i * num_classes + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return Array({labels.size(), num_classes}, std::move(out));
}

Var log_softmax_rows(Var logits) {
  const Array v = logits.value();
  if (v.rank() != 2) throw ShapeError("log_softmax_rows: expected (B, K) logits");
  const std::size_t rows = v.dim(0), k = v.dim(1);
  std::vector<double> shift(rows * k);
  for (std::size_t r = 0; r < rows; ++r) {
    double m = v.at(r, 0);
    for (std::size_t c = 1; c < k; ++c) m = std::max(m, v.at(r, c));
    std::fill_n(shift.begin() + static_cast<std::ptrdiff_t>(r * k), k, m);
  }
  Var shifted = logits - logits.tape()->constant(Array(v.shape(), std::move(shift)));
  Var lse = log(sum_last(exp(shifted)));
  return shifted - expand_last(lse, k);
}

namespace {

Var clamped_nll(Var logits, const Array& targets) {
  if (targets.shape() != logits.shape()) {
    throw ShapeError("loss: targets " + shape_str(targets.shape()) + " vs logits " +
                     shape_str(logits.shape()));
  }
  Var nll = -sum_last(log_softmax_rows(logits) * logits.tape()->constant(targets));
  // min(nll, -log eps): the same clamp the ProbVector losses apply.
  const double cap = -std::log(kProbFloor);
  return nll - relu(nll + (-cap));
}

}  // namespace

Var cce_rows(Var logits, const Array& targets) { return clamped_nll(logits, targets); }

Var mae_rows(Var logits, const Array& targets) {
  return 1.0 - exp(-clamped_nll(logits, targets));
}

Var lq_rows(Var logits, const Array& targets, double q) {
  LossSpec::lq(q);
  Var py = exp(-clamped_nll(logits, targets));
  return (1.0 - pow(py, q)) * (1.0 / q);
}

Var loss_rows(const LossSpec& spec, Var logits, const Array& targets) {
  spec.validate();
  switch (spec.kind) {
    case LossKind::cce: return cce_rows(logits, targets);
    case LossKind::mae: return mae_rows(logits, targets);
    case LossKind::lq: return lq_rows(logits, targets, spec.q);
  }
  throw Error("unknown loss kind");
}

Var nt_xent_loss(Var embeddings, double temperature) {
  check_embeddings(embeddings.value(), temperature);
  Tape& tape = *embeddings.tape();
  const std::size_t rows = embeddings.value().dim(0);
  const std::size_t d = embeddings.value().dim(1);
  const double inv_tau = 1.0 / temperature;

  Var unit = embeddings * expand_last(pow(l2norm(embeddings), -1.0), d);
  Var sim = matmul(unit, transpose(unit)) * inv_tau;

  std::vector<double> partner(rows * rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) partner[r * rows + (r ^ 1U)] = 1.0;
  Var positive = sum_last(sim * tape.constant(Array({rows, rows}, std::move(partner))));

  // log(-e^{1/tau} + sum e^{sim}) = 1/tau + log(sum e^{sim - 1/tau} - 1)
  Var denom = sum_last(exp(sim + (-inv_tau))) + (-1.0);
  Var terms = log(denom) + inv_tau - positive;
  return sum(terms);
}

}  // namespace lab
