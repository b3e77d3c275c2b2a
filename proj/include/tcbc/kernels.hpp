#pragma once

// Dense building blocks of the forward and backward passes, in two flavors:
//   serial  - straightforward loops, kept as the reference implementation
//   omp     - OpenMP data-parallel versions of the same loops
//
// Every output element is produced by exactly the same sequence of floating-point
// operations in both flavors (reductions run over the batch in index order inside one
// thread), so results are bit-identical for any thread count.

#include <span>
#include <vector>

#include "tcbc/types.hpp"

namespace tcbc::kernels {

/// Batches smaller than this run single-threaded inside the OpenMP kernels.
inline constexpr std::size_t kParallelMinRows = 256;

namespace serial {

/// out(i, :) = W * in(i, :) + b
void affine(const Matrix& in, const Matrix& weight, std::span<const double> bias, Matrix& out);
void relu(const Matrix& in, Matrix& out);
/// grad_w = delta^T * in, grad_b = column sums of delta
void weight_gradient(const Matrix& delta, const Matrix& in, Matrix& grad_w,
                     std::vector<double>& grad_b);
/// delta_prev(i, :) = relu'(pre_prev(i, :)) .* (W^T * delta(i, :))
void backprop_relu(const Matrix& delta, const Matrix& weight, const Matrix& pre_prev,
                   Matrix& delta_prev);
/// Row-wise argmax, lowest index on ties.
void argmax_rows(const Matrix& values, std::vector<ClassIndex>& out);

} // namespace serial

namespace omp {

void affine(const Matrix& in, const Matrix& weight, std::span<const double> bias, Matrix& out);
void relu(const Matrix& in, Matrix& out);
void weight_gradient(const Matrix& delta, const Matrix& in, Matrix& grad_w,
                     std::vector<double>& grad_b);
void backprop_relu(const Matrix& delta, const Matrix& weight, const Matrix& pre_prev,
                   Matrix& delta_prev);
void argmax_rows(const Matrix& values, std::vector<ClassIndex>& out);

} // namespace omp

/// Caps the OpenMP thread count (no-op without OpenMP). 0 leaves the runtime default.
void set_thread_limit(int threads);
int max_threads();

} // namespace tcbc::kernels
