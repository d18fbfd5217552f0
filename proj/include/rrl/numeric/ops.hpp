#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rrl/numeric/tape.hpp"

namespace rrl {

// Norm denominators are floored at this value so cosine similarity and
// normalization are defined for zero vectors.
inline constexpr double kNormFloor = 1e-12;

// Number of times a norm hit kNormFloor since the last reset.
std::uint64_t clamped_norm_count();
void reset_clamped_norm_count();

// ---- linear algebra -------------------------------------------------------

DiffArray matmul(const DiffArray& a, const DiffArray& b);
DiffArray transpose(const DiffArray& a);

// ---- elementwise ----------------------------------------------------------

DiffArray add(const DiffArray& a, const DiffArray& b);
DiffArray sub(const DiffArray& a, const DiffArray& b);
DiffArray mul(const DiffArray& a, const DiffArray& b);
DiffArray scale(const DiffArray& a, double s);
DiffArray add_scalar(const DiffArray& a, double s);
DiffArray relu(const DiffArray& a);
DiffArray gelu(const DiffArray& a);
DiffArray exp(const DiffArray& a);
DiffArray log(const DiffArray& a);

// a[m x n] + bias[n], broadcast over rows.
DiffArray add_row(const DiffArray& a, const DiffArray& bias);
// a[m x n] * gate[m], row i scaled by gate[i].
DiffArray mul_rows(const DiffArray& a, const DiffArray& gate);

inline DiffArray operator+(const DiffArray& a, const DiffArray& b) { return add(a, b); }
inline DiffArray operator-(const DiffArray& a, const DiffArray& b) { return sub(a, b); }
inline DiffArray operator*(const DiffArray& a, const DiffArray& b) { return mul(a, b); }
inline DiffArray operator*(double s, const DiffArray& a) { return scale(a, s); }
inline DiffArray operator-(const DiffArray& a) { return scale(a, -1.0); }

// ---- reductions -----------------------------------------------------------

DiffArray sum(const DiffArray& a);
DiffArray mean(const DiffArray& a);
// Column sums / means of a 2-D array: [m x n] -> [n].
DiffArray sum_rows(const DiffArray& a);
DiffArray mean_rows(const DiffArray& a);

// ---- similarity -----------------------------------------------------------

// <u, v> / (max(|u|, floor) * max(|v|, floor)) over all elements.
DiffArray cosine_sim(const DiffArray& u, const DiffArray& v);
// Row-wise cosine similarity of two [m x d] arrays -> [m].
DiffArray cosine_rows(const DiffArray& u, const DiffArray& v);
// Unit-normalizes a vector, or each row of a 2-D array.
DiffArray l2_normalize(const DiffArray& a);

// ---- structure ------------------------------------------------------------

// Identity forward; blocks all gradient flow.
DiffArray stop_gradient(const DiffArray& a);
DiffArray reshape(const DiffArray& a, Shape shape);
// axis 0 stacks rows (or joins 1-D arrays), axis 1 joins columns.
DiffArray concat(std::span<const DiffArray> parts, int axis);
DiffArray gather_rows(const DiffArray& a, std::span<const Index> rows);
// Flat element gather: out[i] = a.flat[index[i]], output shape given.
DiffArray gather(const DiffArray& a, std::span<const Index> index, Shape shape);
DiffArray block(const DiffArray& a, Index row, Index col, Index rows, Index cols);
DiffArray segment(const DiffArray& a, Index offset, Index count);

// ---- neural -------------------------------------------------------------------

// Softmax of a 2-D array along axis 0 (columns) or 1 (rows).
DiffArray softmax(const DiffArray& a, int axis);

// Input [H x W x Cin], weight [kh x kw x Cin x Cout], bias [Cout]; zero
// padding. Output [Ho x Wo x Cout].
DiffArray conv2d(const DiffArray& input, const DiffArray& weight, const DiffArray& bias,
                 Index stride, Index padding);

// Normalizes each row of a [m x n] array over its n entries.
DiffArray layer_norm(const DiffArray& a, const DiffArray& gamma, const DiffArray& beta,
                     double eps = 1e-5);

struct BatchNormStats {
  Vector running_mean;
  Vector running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  static BatchNormStats fresh(Index features);
};

// Normalizes each column of a [m x n] array. Training mode uses batch
// statistics (biased variance) and, when stats is non-null, updates the
// running averages with the unbiased variance. Eval mode uses the running
// averages and requires stats.
DiffArray batch_norm(const DiffArray& a, const DiffArray& gamma, const DiffArray& beta,
                     BatchNormStats* stats, bool training);

// Mean softmax cross-entropy of logits [m x c] against integer targets.
DiffArray cross_entropy(const DiffArray& logits, std::span<const int> targets);

}  // namespace rrl
