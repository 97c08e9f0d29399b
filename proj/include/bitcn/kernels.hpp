#pragma once

#include <cstddef>

// Raw numeric kernels behind the tensor ops. Two implementations live side
// by side:
//
//   bitcn::kernels        optimized loops, OpenMP-parallel when the global
//                         thread count is > 1. Parallelism is only ever over
//                         disjoint output elements and every reduction runs
//                         in a fixed serial order, so results are bit
//                         identical for any thread count.
//   bitcn::kernels::ref   straight-from-the-definition serial loops, kept as
//                         an independent oracle for tests and benchmarks.
//
// Convolution layout: x is (time, batch, in_ch) row-major, weights are
// (out_ch, in_ch/groups, kernel), y is (time, batch, out_ch). Taps outside
// [0, time) read as zero, which realizes the length-preserving zero padding.

namespace bitcn::kernels {

struct ConvDims {
    std::size_t time = 0;
    std::size_t batch = 1;
    std::size_t in_ch = 1;
    std::size_t out_ch = 1;
    std::size_t kernel = 1;
    std::size_t dilation = 1;
    std::size_t groups = 1;
    // true: tap j reads x[t + dilation*j] (anticausal, right padding);
    // false: tap j reads x[t - dilation*j] (causal, left padding).
    bool forward_dir = false;
};

// Global kernel thread budget. 1 disables OpenMP dispatch entirely.
void set_threads(int n);
int threads();

void conv_forward(const double* x, const double* w, const double* bias,
                  double* y, const ConvDims& d);
void conv_grad_input(const double* dy, const double* w, double* dx,
                     const ConvDims& d);
void conv_grad_weights(const double* dy, const double* x, double* dw,
                       double* dbias, const ConvDims& d);

// y (rows, out) = x (rows, in) * w (in, out) + b (out). b may be null.
void affine_forward(const double* x, const double* w, const double* b,
                    double* y, std::size_t rows, std::size_t in,
                    std::size_t out);
void affine_grad_input(const double* dy, const double* w, double* dx,
                       std::size_t rows, std::size_t in, std::size_t out);
void affine_grad_weights(const double* dy, const double* x, double* dw,
                         double* db, std::size_t rows, std::size_t in,
                         std::size_t out);

void gelu_forward(const double* x, double* y, std::size_t n);
// dx[i] = dy[i] * gelu'(x[i]); writes dx, does not accumulate.
void gelu_backward(const double* x, const double* dy, double* dx,
                   std::size_t n);

namespace ref {

void conv_forward(const double* x, const double* w, const double* bias,
                  double* y, const ConvDims& d);
void conv_grad_input(const double* dy, const double* w, double* dx,
                     const ConvDims& d);
void conv_grad_weights(const double* dy, const double* x, double* dw,
                       double* dbias, const ConvDims& d);
void affine_forward(const double* x, const double* w, const double* b,
                    double* y, std::size_t rows, std::size_t in,
                    std::size_t out);

} // namespace ref

} // namespace bitcn::kernels
