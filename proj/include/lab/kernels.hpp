#pragma once

#include <span>

#include "lab/array.hpp"

// Eager float64 kernels backing the tape primitives. Every function validates
// its operand shapes and throws ShapeError / DomainError naming the op.
namespace lab::kernels {

Array add(const Array& a, const Array& b);
Array sub(const Array& a, const Array& b);
Array mul(const Array& a, const Array& b);
Array scale(const Array& a, double c);
/// Rank-2 matrix product (m,k)·(k,n) -> (m,n).
Array matmul(const Array& a, const Array& b);
Array transpose(const Array& a);
Array exp(const Array& a);
/// Requires every entry > 0.
Array log(const Array& a);
/// Elementwise a^q for a real scalar exponent; requires every entry > 0.
Array pow(const Array& a, double q);
Array sum(const Array& a);
Array mean(const Array& a);
Array relu(const Array& a);
/// 1 where a > 0, else 0.
Array relu_mask(const Array& a);
Array sigmoid(const Array& a);
Array concat(std::span<const Array> parts, std::size_t axis);
Array slice(const Array& a, std::size_t axis, std::size_t start, std::size_t length);
/// Inverse of slice: zeros of `shape` with `a` written at [start, start+len) on `axis`.
Array embed(const Array& a, const Shape& shape, std::size_t axis, std::size_t start);
/// Euclidean norm along the last axis; the last dimension becomes 1.
Array l2norm_last(const Array& a);
/// Sum along the last axis; the last dimension becomes 1.
Array sum_last(const Array& a);
/// Repeat a trailing dimension of size 1 `n` times.
Array expand_last(const Array& a, std::size_t n);
/// Fill `shape` with the value of a one-element array.
Array broadcast(const Array& s, const Shape& shape);

}  // namespace lab::kernels
