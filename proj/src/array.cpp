#include "lab/array.hpp"

#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "lab/error.hpp"

namespace lab {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::size_t b) { return a * b; });
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Array::Array() : shape_{0}, data_{std::make_shared<const std::vector<double>>()} {}

Array::Array(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
  if (shape_.empty()) {
    throw ShapeError("array shape must have at least one dimension");
  }
  if (shape_size(shape_) != data.size()) {
    throw ShapeError("array shape " + shape_str(shape_) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

Array Array::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Array Array::full(Shape shape, double value) {
  const std::size_t n = shape_size(shape);
  return Array(std::move(shape), std::vector<double>(n, value));
}

Array Array::scalar(double value) { return Array({1}, {value}); }

Array Array::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Array({n}, std::move(values));
}

Array Array::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Array({r, c}, std::move(data));
}

double Array::item() const {
  if (size() != 1) {
    throw ShapeError("item() on array of shape " + shape_str(shape_));
  }
  return (*data_)[0];
}

bool Array::all_finite() const {
  for (double v : *data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Array Array::reshaped(Shape shape) const {
  if (shape_size(shape) != size()) {
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  Array out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  return out;
}

bool operator==(const Array& a, const Array& b) {
  if (a.shape_ != b.shape_) return false;
  if (a.data_ == b.data_) return true;
  return std::memcmp(a.data_->data(), b.data_->data(), a.size() * sizeof(double)) == 0;
}

}  // namespace lab
