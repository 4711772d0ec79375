#pragma once

#include <cstddef>

#include "lidalign/error.hpp"
#include "lidalign/tensor.hpp"

namespace lidalign::detail {

// Plain direct convolutions on [N, H, W, C] tensors. Correctness and
// determinism over throughput; desk-scale inputs only.

inline std::size_t conv_out_extent(std::size_t in, std::size_t kernel,
                                   std::size_t stride, std::size_t pad) {
    const std::size_t padded = in + 2 * pad;
    if (padded < kernel)
        throw invalid_argument("conv2d: kernel larger than padded input");
    return (padded - kernel) / stride + 1;
}

// x: [N,H,W,Cin], w: [kh,kw,Cin,Cout], b: [Cout] -> [N,Ho,Wo,Cout]
inline Tensor<double> conv2d_forward(const Tensor<double>& x, const Tensor<double>& w,
                                     const Tensor<double>& b, std::size_t stride,
                                     std::size_t pad) {
    if (x.rank() != 4 || w.rank() != 4 || b.rank() != 1)
        throw invalid_argument("conv2d: bad ranks");
    const std::size_t N = x.extent(0), H = x.extent(1), W = x.extent(2), Ci = x.extent(3);
    const std::size_t kh = w.extent(0), kw = w.extent(1);
    if (w.extent(2) != Ci)
        throw invalid_argument("conv2d: input channel mismatch");
    const std::size_t Co = w.extent(3);
    if (b.extent(0) != Co)
        throw invalid_argument("conv2d: bias channel mismatch");
    const std::size_t Ho = conv_out_extent(H, kh, stride, pad);
    const std::size_t Wo = conv_out_extent(W, kw, stride, pad);

    Tensor<double> y({N, Ho, Wo, Co});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < Ho; ++i)
            for (std::size_t j = 0; j < Wo; ++j)
                for (std::size_t co = 0; co < Co; ++co) {
                    double acc = b[co];
                    for (std::size_t di = 0; di < kh; ++di) {
                        const std::ptrdiff_t r =
                            static_cast<std::ptrdiff_t>(i * stride + di) -
                            static_cast<std::ptrdiff_t>(pad);
                        if (r < 0 || r >= static_cast<std::ptrdiff_t>(H)) continue;
                        for (std::size_t dj = 0; dj < kw; ++dj) {
                            const std::ptrdiff_t c =
                                static_cast<std::ptrdiff_t>(j * stride + dj) -
                                static_cast<std::ptrdiff_t>(pad);
                            if (c < 0 || c >= static_cast<std::ptrdiff_t>(W)) continue;
                            for (std::size_t ci = 0; ci < Ci; ++ci)
                                acc += x.at(n, static_cast<std::size_t>(r),
                                            static_cast<std::size_t>(c), ci) *
                                       w.at(di, dj, ci, co);
                        }
                    }
                    y.at(n, i, j, co) = acc;
                }
    return y;
}

// Gradients of a conv2d given upstream dy; any of the outputs may be null.
inline void conv2d_backward(const Tensor<double>& x, const Tensor<double>& w,
                            std::size_t stride, std::size_t pad,
                            const Tensor<double>& dy, Tensor<double>* dx,
                            Tensor<double>* dw, Tensor<double>* db) {
    const std::size_t N = x.extent(0), H = x.extent(1), W = x.extent(2), Ci = x.extent(3);
    const std::size_t kh = w.extent(0), kw = w.extent(1), Co = w.extent(3);
    const std::size_t Ho = dy.extent(1), Wo = dy.extent(2);

    if (dx) *dx = Tensor<double>({N, H, W, Ci});
    if (dw) *dw = Tensor<double>({kh, kw, Ci, Co});
    if (db) *db = Tensor<double>({Co});

    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < Ho; ++i)
            for (std::size_t j = 0; j < Wo; ++j)
                for (std::size_t co = 0; co < Co; ++co) {
                    const double g = dy.at(n, i, j, co);
                    if (g == 0.0) continue;
                    if (db) (*db)[co] += g;
                    for (std::size_t di = 0; di < kh; ++di) {
                        const std::ptrdiff_t r =
                            static_cast<std::ptrdiff_t>(i * stride + di) -
                            static_cast<std::ptrdiff_t>(pad);
                        if (r < 0 || r >= static_cast<std::ptrdiff_t>(H)) continue;
                        for (std::size_t dj = 0; dj < kw; ++dj) {
                            const std::ptrdiff_t c =
                                static_cast<std::ptrdiff_t>(j * stride + dj) -
                                static_cast<std::ptrdiff_t>(pad);
                            if (c < 0 || c >= static_cast<std::ptrdiff_t>(W)) continue;
                            for (std::size_t ci = 0; ci < Ci; ++ci) {
                                const double xv = x.at(n, static_cast<std::size_t>(r),
                                                       static_cast<std::size_t>(c), ci);
                                if (dw) (*dw).at(di, dj, ci, co) += g * xv;
                                if (dx)
                                    (*dx).at(n, static_cast<std::size_t>(r),
                                             static_cast<std::size_t>(c), ci) +=
                                        g * w.at(di, dj, ci, co);
                            }
                        }
                    }
                }
}

} // namespace lidalign::detail
