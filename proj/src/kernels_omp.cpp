#include "tcbc/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tcbc::kernels {

namespace omp {

void affine(const Matrix& in, const Matrix& weight, std::span<const double> bias, Matrix& out) {
    const auto n = static_cast<std::ptrdiff_t>(in.rows());
    const std::size_t din = weight.cols();
    const std::size_t dout = weight.rows();
    out = Matrix(in.rows(), dout);
#pragma omp parallel for schedule(static) if (in.rows() >= kParallelMinRows)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto x = in.row(static_cast<std::size_t>(i));
        for (std::size_t o = 0; o < dout; ++o) {
            double acc = bias[o];
            for (std::size_t d = 0; d < din; ++d) {
                acc += weight(o, d) * x[d];
            }
            out(static_cast<std::size_t>(i), o) = acc;
        }
    }
}

void relu(const Matrix& in, Matrix& out) {
    out = Matrix(in.rows(), in.cols());
    const auto& src = in.data();
    auto& dst = out.data();
    const auto size = static_cast<std::ptrdiff_t>(src.size());
#pragma omp parallel for schedule(static) if (in.rows() >= kParallelMinRows)
    for (std::ptrdiff_t i = 0; i < size; ++i) {
        dst[i] = src[i] > 0.0 ? src[i] : 0.0;
    }
}

// Parallel over output elements; each element reduces over the batch in index order,
// matching the serial accumulation exactly.
void weight_gradient(const Matrix& delta, const Matrix& in, Matrix& grad_w,
                     std::vector<double>& grad_b) {
    const std::size_t n = delta.rows();
    const std::size_t dout = delta.cols();
    const std::size_t din = in.cols();
    grad_w = Matrix(dout, din);
    grad_b.assign(dout, 0.0);
    const auto cells = static_cast<std::ptrdiff_t>(dout * (din + 1));
#pragma omp parallel for schedule(static) if (n >= kParallelMinRows)
    for (std::ptrdiff_t c = 0; c < cells; ++c) {
        const std::size_t o = static_cast<std::size_t>(c) / (din + 1);
        const std::size_t d = static_cast<std::size_t>(c) % (din + 1);
        double acc = 0.0;
        if (d == din) {
            for (std::size_t i = 0; i < n; ++i) {
                acc += delta(i, o);
            }
            grad_b[o] = acc;
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                acc += delta(i, o) * in(i, d);
            }
            grad_w(o, d) = acc;
        }
    }
}

void backprop_relu(const Matrix& delta, const Matrix& weight, const Matrix& pre_prev,
                   Matrix& delta_prev) {
    const auto n = static_cast<std::ptrdiff_t>(delta.rows());
    const std::size_t dout = weight.rows();
    const std::size_t din = weight.cols();
    delta_prev = Matrix(delta.rows(), din);
#pragma omp parallel for schedule(static) if (delta.rows() >= kParallelMinRows)
    for (std::ptrdiff_t ii = 0; ii < n; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        for (std::size_t h = 0; h < din; ++h) {
            if (pre_prev(i, h) <= 0.0) {
                continue;
            }
            double acc = 0.0;
            for (std::size_t o = 0; o < dout; ++o) {
                acc += weight(o, h) * delta(i, o);
            }
            delta_prev(i, h) = acc;
        }
    }
}

void argmax_rows(const Matrix& values, std::vector<ClassIndex>& out) {
    out.resize(values.rows());
    const auto n = static_cast<std::ptrdiff_t>(values.rows());
#pragma omp parallel for schedule(static) if (values.rows() >= kParallelMinRows)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] = argmax(values.row(static_cast<std::size_t>(i)));
    }
}

} // namespace omp

void set_thread_limit(int threads) {
#ifdef _OPENMP
    if (threads > 0) {
        omp_set_num_threads(threads);
    }
#else
    (void)threads;
#endif
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

} // namespace tcbc::kernels
