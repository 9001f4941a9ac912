#include "lab/tape.hpp"

#include <optional>
#include <string>

#include "lab/error.hpp"
#include "lab/kernels.hpp"

namespace lab {

const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::constant: return "constant";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::scale: return "scale";
    case Op::matmul: return "matmul";
    case Op::transpose: return "transpose";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::pow: return "pow";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::relu: return "relu";
    case Op::sigmoid: return "sigmoid";
    case Op::concat: return "concat";
    case Op::slice: return "slice";
    case Op::embed: return "embed";
    case Op::l2norm: return "l2norm";
    case Op::sum_last: return "sum_last";
    case Op::expand_last: return "expand_last";
    case Op::broadcast: return "broadcast";
    case Op::reshape: return "reshape";
  }
  return "?";
}

const Array& Var::value() const {
  if (!tape_) throw Error("use of a default-constructed Var");
  return tape_->nodes_[id_].value;
}

const Array& GradientMap::at(std::size_t id) const {
  auto it = grads_.find(id);
  if (it == grads_.end()) throw Error("no gradient recorded for node " + std::to_string(id));
  return it->second;
}

std::size_t Tape::push(Op op, std::vector<std::size_t> parents, Array value, OpAttrs attrs) {
  const std::size_t id = nodes_.size();
  for (std::size_t p : parents) {
    if (p >= id) {
      throw Error(std::string("tape order violated: ") + op_name(op) + " node " +
                  std::to_string(id) + " references node " + std::to_string(p));
    }
  }
  nodes_.push_back(TapeNode{id, op, std::move(parents), std::move(value), std::move(attrs)});
  return id;
}

void Tape::check_owned(const Var& v, const char* what) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw Error(std::string(what) + ": node is not on this tape");
  }
}

Var Tape::leaf(Array value) {
  if (!value.all_finite()) {
    throw DomainError("leaf array of shape " + shape_str(value.shape()) +
                      " contains NaN or Inf");
  }
  return Var(this, push(Op::leaf, {}, std::move(value), {}));
}

Var Tape::constant(Array value) { return Var(this, push(Op::constant, {}, std::move(value), {})); }

namespace {

void require_arity(Op op, std::size_t got, std::size_t want) {
  if (got != want) {
    throw ShapeError(std::string(op_name(op)) + ": expected " + std::to_string(want) +
                     " operands, got " + std::to_string(got));
  }
}

Array evaluate(Op op, std::span<const Array> in, const OpAttrs& at) {
  namespace k = kernels;
  const auto unary = [&] { require_arity(op, in.size(), 1); };
  const auto binary = [&] { require_arity(op, in.size(), 2); };
  switch (op) {
    case Op::leaf:
    case Op::constant:
      throw Error("leaf/constant nodes are created with Tape::leaf / Tape::constant");
    case Op::add: binary(); return k::add(in[0], in[1]);
    case Op::sub: binary(); return k::sub(in[0], in[1]);
    case Op::mul: binary(); return k::mul(in[0], in[1]);
    case Op::scale: unary(); return k::scale(in[0], at.scalar);
    case Op::matmul: binary(); return k::matmul(in[0], in[1]);
    case Op::transpose: unary(); return k::transpose(in[0]);
    case Op::exp: unary(); return k::exp(in[0]);
    case Op::log: unary(); return k::log(in[0]);
    case Op::pow: unary(); return k::pow(in[0], at.scalar);
    case Op::sum: unary(); return k::sum(in[0]);
    case Op::mean: unary(); return k::mean(in[0]);
    case Op::relu: unary(); return k::relu(in[0]);
    case Op::sigmoid: unary(); return k::sigmoid(in[0]);
    case Op::concat: return k::concat(in, at.axis);
    case Op::slice: unary(); return k::slice(in[0], at.axis, at.start, at.length);
    case Op::embed: unary(); return k::embed(in[0], at.shape, at.axis, at.start);
    case Op::l2norm: unary(); return k::l2norm_last(in[0]);
    case Op::sum_last: unary(); return k::sum_last(in[0]);
    case Op::expand_last: unary(); return k::expand_last(in[0], at.length);
    case Op::broadcast: unary(); return k::broadcast(in[0], at.shape);
    case Op::reshape: unary(); return in[0].reshaped(at.shape);
  }
  throw Error("unknown op");
}

// Vector-Jacobian products, written once against a backend so the same rules
// drive both the eager backward pass (handles are Arrays) and the
// graph-emitting one (handles are node ids).
template <class B, class Wants, class Emit>
void apply_vjp(B& b, const TapeNode& n, const typename B::H& g, Wants wants, Emit emit) {
  const auto in = [&](std::size_t k) { return b.input(n, k); };
  const auto in_shape = [&](std::size_t k) -> Shape { return b.input_value(n, k).shape(); };
  switch (n.op) {
    case Op::leaf:
    case Op::constant:
      return;
    case Op::add:
      if (wants(0)) emit(0, g);
      if (wants(1)) emit(1, g);
      return;
    case Op::sub:
      if (wants(0)) emit(0, g);
      if (wants(1)) emit(1, b.scale(g, -1.0));
      return;
    case Op::mul:
      if (wants(0)) emit(0, b.mul(g, in(1)));
      if (wants(1)) emit(1, b.mul(g, in(0)));
      return;
    case Op::scale:
      emit(0, b.scale(g, n.attrs.scalar));
      return;
    case Op::matmul:
      if (wants(0)) emit(0, b.matmul(g, b.transpose(in(1))));
      if (wants(1)) emit(1, b.matmul(b.transpose(in(0)), g));
      return;
    case Op::transpose:
      emit(0, b.transpose(g));
      return;
    case Op::exp:
      emit(0, b.mul(g, b.output(n)));
      return;
    case Op::log:
      emit(0, b.mul(g, b.pow(in(0), -1.0)));
      return;
    case Op::pow: {
      const double q = n.attrs.scalar;
      emit(0, b.mul(g, b.scale(b.pow(in(0), q - 1.0), q)));
      return;
    }
    case Op::sum:
      emit(0, b.broadcast(g, in_shape(0)));
      return;
    case Op::mean: {
      const auto count = static_cast<double>(shape_size(in_shape(0)));
      emit(0, b.broadcast(b.scale(g, 1.0 / count), in_shape(0)));
      return;
    }
    case Op::relu:
      emit(0, b.mul(g, b.constant(kernels::relu_mask(b.input_value(n, 0)))));
      return;
    case Op::sigmoid: {
      const auto s = b.output(n);
      const auto one = b.constant(Array::full(n.value.shape(), 1.0));
      emit(0, b.mul(g, b.mul(s, b.sub(one, s))));
      return;
    }
    case Op::concat: {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < n.parents.size(); ++k) {
        const std::size_t len = in_shape(k)[n.attrs.axis];
        if (wants(k)) emit(k, b.slice(g, n.attrs.axis, offset, len));
        offset += len;
      }
      return;
    }
    case Op::slice:
      emit(0, b.embed(g, in_shape(0), n.attrs.axis, n.attrs.start));
      return;
    case Op::embed:
      emit(0, b.slice(g, n.attrs.axis, n.attrs.start, in_shape(0)[n.attrs.axis]));
      return;
    case Op::l2norm: {
      const std::size_t len = in_shape(0).back();
      const auto inv = b.pow(b.output(n), -1.0);
      emit(0, b.mul(b.expand_last(b.mul(g, inv), len), in(0)));
      return;
    }
    case Op::sum_last:
      emit(0, b.expand_last(g, in_shape(0).back()));
      return;
    case Op::expand_last:
      emit(0, b.sum_last(g));
      return;
    case Op::broadcast:
      emit(0, b.reshape(b.sum(g), in_shape(0)));
      return;
    case Op::reshape:
      emit(0, b.reshape(g, in_shape(0)));
      return;
  }
}

struct EagerBackend {
  using H = Array;
  const Tape& tape;

  const Array& input_value(const TapeNode& n, std::size_t k) const {
    return tape.node(n.parents[k]).value;
  }
  H input(const TapeNode& n, std::size_t k) const { return input_value(n, k); }
  H output(const TapeNode& n) const { return n.value; }
  H constant(Array a) const { return a; }

  H add(const H& a, const H& b) const { return kernels::add(a, b); }
  H sub(const H& a, const H& b) const { return kernels::sub(a, b); }
  H mul(const H& a, const H& b) const { return kernels::mul(a, b); }
  H scale(const H& a, double c) const { return kernels::scale(a, c); }
  H matmul(const H& a, const H& b) const { return kernels::matmul(a, b); }
  H transpose(const H& a) const { return kernels::transpose(a); }
  H pow(const H& a, double q) const { return kernels::pow(a, q); }
  H sum(const H& a) const { return kernels::sum(a); }
  H broadcast(const H& a, const Shape& s) const { return kernels::broadcast(a, s); }
  H slice(const H& a, std::size_t axis, std::size_t start, std::size_t len) const {
    return kernels::slice(a, axis, start, len);
  }
  H embed(const H& a, const Shape& s, std::size_t axis, std::size_t start) const {
    return kernels::embed(a, s, axis, start);
  }
  H expand_last(const H& a, std::size_t n) const { return kernels::expand_last(a, n); }
  H sum_last(const H& a) const { return kernels::sum_last(a); }
  H reshape(const H& a, const Shape& s) const { return a.reshaped(s); }
};

}  // namespace

struct GraphBackend {
  using H = std::size_t;
  Tape& tape;

  const Array& input_value(const TapeNode& n, std::size_t k) const {
    return tape.nodes_[n.parents[k]].value;
  }
  H input(const TapeNode& n, std::size_t k) const { return n.parents[k]; }
  H output(const TapeNode& n) const { return n.id; }
  H constant(Array a) const { return tape.push(Op::constant, {}, std::move(a), {}); }

  H emit(Op op, std::vector<std::size_t> parents, OpAttrs attrs = {}) const {
    std::vector<Array> values;
    values.reserve(parents.size());
    for (std::size_t p : parents) values.push_back(tape.nodes_[p].value);
    Array v = evaluate(op, values, attrs);
    return tape.push(op, std::move(parents), std::move(v), std::move(attrs));
  }

  H add(H a, H b) const { return emit(Op::add, {a, b}); }
  H sub(H a, H b) const { return emit(Op::sub, {a, b}); }
  H mul(H a, H b) const { return emit(Op::mul, {a, b}); }
  H scale(H a, double c) const { return emit(Op::scale, {a}, OpAttrs{.scalar = c}); }
  H matmul(H a, H b) const { return emit(Op::matmul, {a, b}); }
  H transpose(H a) const { return emit(Op::transpose, {a}); }
  H pow(H a, double q) const { return emit(Op::pow, {a}, OpAttrs{.scalar = q}); }
  H sum(H a) const { return emit(Op::sum, {a}); }
  H broadcast(H a, const Shape& s) const { return emit(Op::broadcast, {a}, OpAttrs{.shape = s}); }
  H slice(H a, std::size_t axis, std::size_t start, std::size_t len) const {
    return emit(Op::slice, {a}, OpAttrs{.axis = axis, .start = start, .length = len});
  }
  H embed(H a, const Shape& s, std::size_t axis, std::size_t start) const {
    return emit(Op::embed, {a}, OpAttrs{.axis = axis, .start = start, .shape = s});
  }
  H expand_last(H a, std::size_t n) const {
    return emit(Op::expand_last, {a}, OpAttrs{.length = n});
  }
  H sum_last(H a) const { return emit(Op::sum_last, {a}); }
  H reshape(H a, const Shape& s) const {
    if (tape.nodes_[a].value.shape() == s) return a;
    return emit(Op::reshape, {a}, OpAttrs{.shape = s});
  }
};

namespace {

template <class B>
std::vector<std::optional<typename B::H>> reverse_sweep(B& b, const Tape& tape,
                                                        std::size_t output,
                                                        const std::vector<bool>& needs) {
  using H = typename B::H;
  std::vector<std::optional<H>> grads(output + 1);
  grads[output] = b.constant(Array::full(tape.node(output).value.shape(), 1.0));
  for (std::size_t i = output + 1; i-- > 0;) {
    if (!grads[i] || !needs[i]) continue;
    // Copy: the graph backend appends to the tape while we read this node.
    const TapeNode n = tape.node(i);
    if (n.op == Op::leaf || n.op == Op::constant) continue;
    const H g = *grads[i];
    apply_vjp(
        b, n, g, [&](std::size_t k) { return static_cast<bool>(needs[n.parents[k]]); },
        [&](std::size_t k, H h) {
          auto& slot = grads[n.parents[k]];
          slot = slot ? b.add(*slot, h) : std::move(h);
        });
  }
  return grads;
}

}  // namespace

std::vector<bool> Tape::dependency_mask(std::size_t output, std::span<const Var> leaves) const {
  std::vector<bool> needs(output + 1, false);
  for (const Var& l : leaves) {
    if (l.id_ <= output) needs[l.id_] = true;
  }
  for (std::size_t i = 0; i <= output; ++i) {
    const TapeNode& n = nodes_[i];
    if (n.op == Op::constant) {
      needs[i] = false;
      continue;
    }
    for (std::size_t p : n.parents) {
      if (needs[p]) {
        needs[i] = true;
        break;
      }
    }
  }
  return needs;
}

GradientMap Tape::backward(Var output, std::span<const Var> leaves) {
  check_owned(output, "backward");
  for (const Var& l : leaves) check_owned(l, "backward leaf");
  const Array& out = nodes_[output.id_].value;
  if (out.size() != 1) {
    throw ShapeError("backward: output must be scalar, got shape " + shape_str(out.shape()));
  }
  const auto needs = dependency_mask(output.id_, leaves);
  EagerBackend b{*this};
  auto grads = reverse_sweep(b, *this, output.id_, needs);
  GradientMap result;
  for (const Var& l : leaves) {
    if (l.id_ <= output.id_ && grads[l.id_]) {
      result.set(l.id_, *grads[l.id_]);
    } else {
      result.set(l.id_, Array::zeros(nodes_[l.id_].value.shape()));
    }
  }
  return result;
}

std::vector<Array> Tape::gradients(Var output, std::span<const Var> leaves) {
  const GradientMap g = backward(output, leaves);
  std::vector<Array> out;
  out.reserve(leaves.size());
  for (const Var& l : leaves) out.push_back(g[l]);
  return out;
}

std::vector<Var> Tape::backward_as_graph(Var output, std::span<const Var> leaves) {
  check_owned(output, "backward_as_graph");
  for (const Var& l : leaves) check_owned(l, "backward_as_graph leaf");
  const Array& out = nodes_[output.id_].value;
  if (out.size() != 1) {
    throw ShapeError("backward_as_graph: output must be scalar, got shape " +
                     shape_str(out.shape()));
  }
  const auto needs = dependency_mask(output.id_, leaves);
  GraphBackend b{*this};
  auto grads = reverse_sweep(b, *this, output.id_, needs);
  std::vector<Var> result;
  result.reserve(leaves.size());
  for (const Var& l : leaves) {
    if (l.id_ <= output.id_ && grads[l.id_]) {
      result.push_back(Var(this, *grads[l.id_]));
    } else {
      result.push_back(constant(Array::zeros(nodes_[l.id_].value.shape())));
    }
  }
  return result;
}

Var Tape::eval_primitive(Op op, std::span<const Var> inputs, OpAttrs attrs) {
  std::vector<std::size_t> parents;
  std::vector<Array> values;
  parents.reserve(inputs.size());
  values.reserve(inputs.size());
  for (const Var& v : inputs) {
    check_owned(v, op_name(op));
    parents.push_back(v.id_);
    values.push_back(nodes_[v.id_].value);
  }
  Array value = evaluate(op, values, attrs);
  return Var(this, push(op, std::move(parents), std::move(value), std::move(attrs)));
}

namespace {

Tape& tape_of(const Var& v) {
  if (!v.tape()) throw Error("use of a default-constructed Var");
  return *v.tape();
}

Var apply1(Op op, Var a, OpAttrs attrs = {}) {
  const Var in[] = {a};
  return tape_of(a).eval_primitive(op, in, std::move(attrs));
}

Var apply2(Op op, Var a, Var b) {
  const Var in[] = {a, b};
  return tape_of(a).eval_primitive(op, in);
}

}  // namespace

Var add(Var a, Var b) { return apply2(Op::add, a, b); }
Var sub(Var a, Var b) { return apply2(Op::sub, a, b); }
Var mul(Var a, Var b) { return apply2(Op::mul, a, b); }
Var scale(Var a, double c) { return apply1(Op::scale, a, OpAttrs{.scalar = c}); }
Var matmul(Var a, Var b) { return apply2(Op::matmul, a, b); }
Var transpose(Var a) { return apply1(Op::transpose, a); }
Var exp(Var a) { return apply1(Op::exp, a); }
Var log(Var a) { return apply1(Op::log, a); }
Var pow(Var a, double q) { return apply1(Op::pow, a, OpAttrs{.scalar = q}); }
Var sum(Var a) { return apply1(Op::sum, a); }
Var mean(Var a) { return apply1(Op::mean, a); }
Var relu(Var a) { return apply1(Op::relu, a); }
Var sigmoid(Var a) { return apply1(Op::sigmoid, a); }

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  return tape_of(parts[0]).eval_primitive(Op::concat, parts, OpAttrs{.axis = axis});
}

Var slice(Var a, std::size_t axis, std::size_t start, std::size_t length) {
  return apply1(Op::slice, a, OpAttrs{.axis = axis, .start = start, .length = length});
}

Var embed(Var a, const Shape& shape, std::size_t axis, std::size_t start) {
  return apply1(Op::embed, a, OpAttrs{.axis = axis, .start = start, .shape = shape});
}

Var l2norm(Var a) { return apply1(Op::l2norm, a); }
Var sum_last(Var a) { return apply1(Op::sum_last, a); }
Var expand_last(Var a, std::size_t n) { return apply1(Op::expand_last, a, OpAttrs{.length = n}); }
Var broadcast(Var s, const Shape& shape) { return apply1(Op::broadcast, s, OpAttrs{.shape = shape}); }
Var reshape(Var a, const Shape& shape) { return apply1(Op::reshape, a, OpAttrs{.shape = shape}); }

Var full_like(Var like, double c) {
  return tape_of(like).constant(Array::full(like.shape(), c));
}

}  // namespace lab
