#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "lab/array.hpp"

namespace lab {

enum class Op : std::uint8_t {
  leaf,
  constant,
  add,
  sub,
  mul,
  scale,
  matmul,
  transpose,
  exp,
  log,
  pow,
  sum,
  mean,
  relu,
  sigmoid,
  concat,
  slice,
  embed,
  l2norm,
  sum_last,
  expand_last,
  broadcast,
  reshape,
};

const char* op_name(Op op);

/// Static parameters of a primitive. Which fields are meaningful depends on
/// the op: `scalar` for scale/pow, `axis`/`start`/`length` for
/// concat/slice/embed, `shape` for embed/broadcast/reshape, `length` for
/// expand_last.
struct OpAttrs {
  double scalar = 0.0;
  std::size_t axis = 0;
  std::size_t start = 0;
  std::size_t length = 0;
  Shape shape;
};

struct TapeNode {
  std::size_t id = 0;
  Op op = Op::constant;
  std::vector<std::size_t> parents;
  Array value;
  OpAttrs attrs;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while its tape lives.
class Var {
 public:
  Var() = default;

  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  const Array& value() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// d(output)/d(leaf) keyed by leaf node id.
class GradientMap {
 public:
  void set(std::size_t id, Array grad) { grads_.insert_or_assign(id, std::move(grad)); }
  bool contains(std::size_t id) const { return grads_.contains(id); }
  const Array& at(std::size_t id) const;
  const Array& operator[](const Var& v) const { return at(v.id()); }
  std::size_t size() const { return grads_.size(); }

 private:
  std::map<std::size_t, Array> grads_;
};

/// Append-only record of primitive evaluations.
///
/// Parents always precede their children, so node order is a topological
/// order. A tape has a single owner; it is neither copyable nor movable
/// because Vars point back to it.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input. Rejects NaN/Inf.
  Var leaf(Array value);
  /// Input that never receives a gradient.
  Var constant(Array value);

  Var eval_primitive(Op op, std::span<const Var> inputs, OpAttrs attrs = {});

  const TapeNode& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse accumulation of a scalar output into the given leaves.
  GradientMap backward(Var output, std::span<const Var> leaves);
  /// Same, in leaf order.
  std::vector<Array> gradients(Var output, std::span<const Var> leaves);
  /// Gradients emitted as tape nodes so they can be differentiated again.
  std::vector<Var> backward_as_graph(Var output, std::span<const Var> leaves);

 private:
  friend class Var;
  friend struct GraphBackend;

  std::size_t push(Op op, std::vector<std::size_t> parents, Array value, OpAttrs attrs);
  void check_owned(const Var& v, const char* what) const;
  std::vector<bool> dependency_mask(std::size_t output, std::span<const Var> leaves) const;

  std::vector<TapeNode> nodes_;
};

// Primitive wrappers. All operands must live on the same tape.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var exp(Var a);
Var log(Var a);
Var pow(Var a, double q);
Var sum(Var a);
Var mean(Var a);
Var relu(Var a);
Var sigmoid(Var a);
Var concat(std::span<const Var> parts, std::size_t axis);
Var slice(Var a, std::size_t axis, std::size_t start, std::size_t length);
Var embed(Var a, const Shape& shape, std::size_t axis, std::size_t start);
/// Euclidean norm along the last axis (last dimension becomes 1).
Var l2norm(Var a);
Var sum_last(Var a);
Var expand_last(Var a, std::size_t n);
/// Spread a one-element node over `shape`.
Var broadcast(Var s, const Shape& shape);
Var reshape(Var a, const Shape& shape);

/// Shorthand: constant scalar c broadcast to the shape of `like`.
Var full_like(Var like, double c);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(Var a, double c) { return scale(a, c); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator-(Var a) { return scale(a, -1.0); }
inline Var operator-(double c, Var a) { return sub(full_like(a, c), a); }
inline Var operator+(Var a, double c) { return add(a, full_like(a, c)); }

}  // namespace lab
