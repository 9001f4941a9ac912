#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lab {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense float64 tensor in row-major order.
///
/// The buffer is immutable once constructed and shared between copies, so an
/// Array can be passed by value and read from several threads at once.
class Array {
 public:
  Array();
  Array(Shape shape, std::vector<double> data);

  static Array zeros(Shape shape);
  static Array full(Shape shape, double value);
  static Array scalar(double value);
  static Array vector(std::vector<double> values);
  /// Row-major matrix from nested rows; all rows must have equal length.
  static Array matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_->size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::span<const double> data() const { return *data_; }

  double operator[](std::size_t i) const { return (*data_)[i]; }
  /// Element of a rank-2 array.
  double at(std::size_t row, std::size_t col) const {
    return (*data_)[row * shape_[1] + col];
  }
  /// Sole element of a one-element array.
  double item() const;

  bool all_finite() const;
  Array reshaped(Shape shape) const;

  /// Bitwise equality of shape and contents.
  friend bool operator==(const Array& a, const Array& b);

 private:
  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
};

}  // namespace lab
