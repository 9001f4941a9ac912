#include "lab/kernels.hpp"

#include <cmath>
#include <string>

#include "lab/error.hpp"

namespace lab::kernels {
namespace {

void require_same(const char* op, const Array& a, const Array& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

void require_rank2(const char* op, const Array& a) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected rank-2 operand, got " +
                     shape_str(a.shape()));
  }
}

template <class F>
Array map(const Array& a, F f) {
  std::vector<double> out(a.size());
  const auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return Array(a.shape(), std::move(out));
}

template <class F>
Array zip(const char* op, const Array& a, const Array& b, F f) {
  require_same(op, a, b);
  std::vector<double> out(a.size());
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i], y[i]);
  return Array(a.shape(), std::move(out));
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t length = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const char* op, const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for " + shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.length = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void require_positive(const char* op, const Array& a) {
  const auto d = a.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!(d[i] > 0.0)) {
      throw DomainError(std::string(op) + ": non-positive value " + std::to_string(d[i]) +
                        " at index " + std::to_string(i));
    }
  }
}

}  // namespace

Array add(const Array& a, const Array& b) {
  return zip("add", a, b, [](double x, double y) { return x + y; });
}

Array sub(const Array& a, const Array& b) {
  return zip("sub", a, b, [](double x, double y) { return x - y; });
}

Array mul(const Array& a, const Array& b) {
  return zip("mul", a, b, [](double x, double y) { return x * y; });
}

Array scale(const Array& a, double c) {
  return map(a, [c](double x) { return c * x; });
}

Array matmul(const Array& a, const Array& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x[i * k + p];
      const double* yrow = y.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += xv * yrow[j];
    }
  }
  return Array({m, n}, std::move(out));
}

Array transpose(const Array& a) {
  require_rank2("transpose", a);
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r * c);
  const auto x = a.data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  }
  return Array({c, r}, std::move(out));
}

Array exp(const Array& a) {
  return map(a, [](double x) { return std::exp(x); });
}

Array log(const Array& a) {
  require_positive("log", a);
  return map(a, [](double x) { return std::log(x); });
}

Array pow(const Array& a, double q) {
  if (!std::isfinite(q)) throw DomainError("pow: non-finite exponent");
  require_positive("pow", a);
  return map(a, [q](double x) { return std::pow(x, q); });
}

Array sum(const Array& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Array::scalar(s);
}

Array mean(const Array& a) {
  if (a.size() == 0) throw ShapeError("mean: empty array");
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Array::scalar(s / static_cast<double>(a.size()));
}

Array relu(const Array& a) {
  return map(a, [](double x) { return x > 0.0 ? x : 0.0; });
}

Array relu_mask(const Array& a) {
  return map(a, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Array sigmoid(const Array& a) {
  return map(a, [](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
}

Array concat(std::span<const Array> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  Shape shape = parts[0].shape();
  const AxisSplit first = split_at("concat", shape, axis);
  std::size_t total = 0;
  for (const Array& p : parts) {
    Shape probe = p.shape();
    if (probe.size() != shape.size()) {
      throw ShapeError("concat: rank mismatch " + shape_str(shape) + " vs " +
                       shape_str(probe));
    }
    total += probe[axis];
    probe[axis] = shape[axis];
    if (probe != shape) {
      throw ShapeError("concat: shapes " + shape_str(shape) + " and " + shape_str(p.shape()) +
                       " differ off axis " + std::to_string(axis));
    }
  }
  shape[axis] = total;
  std::vector<double> out;
  out.reserve(shape_size(shape));
  for (std::size_t o = 0; o < first.outer; ++o) {
    for (const Array& p : parts) {
      const std::size_t chunk = p.dim(axis) * first.inner;
      const auto d = p.data();
      out.insert(out.end(), d.begin() + o * chunk, d.begin() + (o + 1) * chunk);
    }
  }
  return Array(std::move(shape), std::move(out));
}

Array slice(const Array& a, std::size_t axis, std::size_t start, std::size_t length) {
  const AxisSplit s = split_at("slice", a.shape(), axis);
  if (start + length > s.length || length == 0) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") invalid for " + shape_str(a.shape()) +
                     " axis " + std::to_string(axis));
  }
  Shape shape = a.shape();
  shape[axis] = length;
  std::vector<double> out;
  out.reserve(shape_size(shape));
  const auto d = a.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    const auto begin = d.begin() + (o * s.length + start) * s.inner;
    out.insert(out.end(), begin, begin + length * s.inner);
  }
  return Array(std::move(shape), std::move(out));
}

Array embed(const Array& a, const Shape& shape, std::size_t axis, std::size_t start) {
  const AxisSplit s = split_at("embed", shape, axis);
  Shape expect = shape;
  expect[axis] = a.shape().size() == shape.size() ? a.dim(axis) : 0;
  if (a.shape() != expect || start + a.dim(axis) > s.length) {
    throw ShapeError("embed: cannot place " + shape_str(a.shape()) + " into " +
                     shape_str(shape) + " at " + std::to_string(start));
  }
  const std::size_t len = a.dim(axis);
  std::vector<double> out(shape_size(shape), 0.0);
  const auto d = a.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy(d.begin() + o * len * s.inner, d.begin() + (o + 1) * len * s.inner,
              out.begin() + (o * s.length + start) * s.inner);
  }
  return Array(shape, std::move(out));
}

Array l2norm_last(const Array& a) {
  const std::size_t n = a.shape().back();
  Shape shape = a.shape();
  shape.back() = 1;
  const std::size_t rows = n ? a.size() / n : 0;
  std::vector<double> out(rows);
  const auto d = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += d[r * n + j] * d[r * n + j];
    out[r] = std::sqrt(s);
  }
  return Array(std::move(shape), std::move(out));
}

Array sum_last(const Array& a) {
  const std::size_t n = a.shape().back();
  Shape shape = a.shape();
  shape.back() = 1;
  const std::size_t rows = n ? a.size() / n : 0;
  std::vector<double> out(rows, 0.0);
  const auto d = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) out[r] += d[r * n + j];
  }
  return Array(std::move(shape), std::move(out));
}

Array expand_last(const Array& a, std::size_t n) {
  if (a.shape().back() != 1) {
    throw ShapeError("expand_last: trailing dimension must be 1, got " + shape_str(a.shape()));
  }
  Shape shape = a.shape();
  shape.back() = n;
  std::vector<double> out;
  out.reserve(a.size() * n);
  for (double v : a.data()) out.insert(out.end(), n, v);
  return Array(std::move(shape), std::move(out));
}

Array broadcast(const Array& s, const Shape& shape) {
  if (s.size() != 1) {
    throw ShapeError("broadcast: source must hold one value, got " + shape_str(s.shape()));
  }
  return Array::full(shape, s[0]);
}

}  // namespace lab::kernels
