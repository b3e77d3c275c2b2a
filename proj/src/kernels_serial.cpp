#include "tcbc/kernels.hpp"

namespace tcbc::kernels::serial {

void affine(const Matrix& in, const Matrix& weight, std::span<const double> bias, Matrix& out) {
    const std::size_t n = in.rows();
    const std::size_t din = weight.cols();
    const std::size_t dout = weight.rows();
    out = Matrix(n, dout);
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = in.row(i);
        for (std::size_t o = 0; o < dout; ++o) {
            double acc = bias[o];
            for (std::size_t d = 0; d < din; ++d) {
                acc += weight(o, d) * x[d];
            }
            out(i, o) = acc;
        }
    }
}

void relu(const Matrix& in, Matrix& out) {
    out = Matrix(in.rows(), in.cols());
    const auto& src = in.data();
    auto& dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i] = src[i] > 0.0 ? src[i] : 0.0;
    }
}

void weight_gradient(const Matrix& delta, const Matrix& in, Matrix& grad_w,
                     std::vector<double>& grad_b) {
    const std::size_t n = delta.rows();
    const std::size_t dout = delta.cols();
    const std::size_t din = in.cols();
    grad_w = Matrix(dout, din);
    grad_b.assign(dout, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t o = 0; o < dout; ++o) {
            const double g = delta(i, o);
            grad_b[o] += g;
            for (std::size_t d = 0; d < din; ++d) {
                grad_w(o, d) += g * in(i, d);
            }
        }
    }
}

void backprop_relu(const Matrix& delta, const Matrix& weight, const Matrix& pre_prev,
                   Matrix& delta_prev) {
    const std::size_t n = delta.rows();
    const std::size_t dout = weight.rows();
    const std::size_t din = weight.cols();
    delta_prev = Matrix(n, din);
    for (std::size_t i = 0; i < n; ++i) {
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
    for (std::size_t i = 0; i < values.rows(); ++i) {
        out[i] = argmax(values.row(i));
    }
}

} // namespace tcbc::kernels::serial
