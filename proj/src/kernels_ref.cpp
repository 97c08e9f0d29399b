#include "bitcn/kernels.hpp"

// Reference kernels: direct transcriptions of the defining sums, no
// repacking, no parallelism, no shortcuts. These are the oracle the
// optimized kernels are tested and benchmarked against.

namespace bitcn::kernels::ref {

void conv_forward(const double* x, const double* w, const double* bias,
                  double* y, const ConvDims& d) {
    const std::size_t icg = d.in_ch / d.groups;
    const std::size_t ocg = d.out_ch / d.groups;
    const std::ptrdiff_t step =
        d.forward_dir ? static_cast<std::ptrdiff_t>(d.dilation)
                      : -static_cast<std::ptrdiff_t>(d.dilation);
    for (std::size_t t = 0; t < d.time; ++t) {
        for (std::size_t b = 0; b < d.batch; ++b) {
            for (std::size_t o = 0; o < d.out_ch; ++o) {
                const std::size_t gbase = (o / ocg) * icg;
                double acc = bias ? bias[o] : 0.0;
                for (std::size_t j = 0; j < d.kernel; ++j) {
                    const std::ptrdiff_t tt =
                        static_cast<std::ptrdiff_t>(t) +
                        step * static_cast<std::ptrdiff_t>(j);
                    if (tt < 0 || tt >= static_cast<std::ptrdiff_t>(d.time))
                        continue;
                    for (std::size_t c = 0; c < icg; ++c)
                        acc += w[(o * icg + c) * d.kernel + j] *
                               x[(static_cast<std::size_t>(tt) * d.batch +
                                  b) *
                                     d.in_ch +
                                 gbase + c];
                }
                y[(t * d.batch + b) * d.out_ch + o] = acc;
            }
        }
    }
}

void conv_grad_input(const double* dy, const double* w, double* dx,
                     const ConvDims& d) {
    const std::size_t icg = d.in_ch / d.groups;
    const std::size_t ocg = d.out_ch / d.groups;
    const std::ptrdiff_t step =
        d.forward_dir ? static_cast<std::ptrdiff_t>(d.dilation)
                      : -static_cast<std::ptrdiff_t>(d.dilation);
    for (std::size_t t = 0; t < d.time; ++t) {
        for (std::size_t b = 0; b < d.batch; ++b) {
            for (std::size_t ci = 0; ci < d.in_ch; ++ci) {
                const std::size_t gi = ci / icg;
                const std::size_t cl = ci % icg;
                double acc = 0.0;
                for (std::size_t j = 0; j < d.kernel; ++j) {
                    const std::ptrdiff_t tt =
                        static_cast<std::ptrdiff_t>(t) -
                        step * static_cast<std::ptrdiff_t>(j);
                    if (tt < 0 || tt >= static_cast<std::ptrdiff_t>(d.time))
                        continue;
                    for (std::size_t ol = 0; ol < ocg; ++ol)
                        acc += w[((gi * ocg + ol) * icg + cl) * d.kernel +
                                 j] *
                               dy[(static_cast<std::size_t>(tt) * d.batch +
                                   b) *
                                      d.out_ch +
                                  gi * ocg + ol];
                }
                dx[(t * d.batch + b) * d.in_ch + ci] = acc;
            }
        }
    }
}

void conv_grad_weights(const double* dy, const double* x, double* dw,
                       double* dbias, const ConvDims& d) {
    const std::size_t icg = d.in_ch / d.groups;
    const std::size_t ocg = d.out_ch / d.groups;
    const std::ptrdiff_t step =
        d.forward_dir ? static_cast<std::ptrdiff_t>(d.dilation)
                      : -static_cast<std::ptrdiff_t>(d.dilation);
    for (std::size_t o = 0; o < d.out_ch; ++o) {
        const std::size_t gbase = (o / ocg) * icg;
        for (std::size_t c = 0; c < icg; ++c) {
            for (std::size_t j = 0; j < d.kernel; ++j) {
                double acc = 0.0;
                for (std::size_t t = 0; t < d.time; ++t) {
                    const std::ptrdiff_t tt =
                        static_cast<std::ptrdiff_t>(t) +
                        step * static_cast<std::ptrdiff_t>(j);
                    if (tt < 0 || tt >= static_cast<std::ptrdiff_t>(d.time))
                        continue;
                    for (std::size_t b = 0; b < d.batch; ++b)
                        acc += dy[(t * d.batch + b) * d.out_ch + o] *
                               x[(static_cast<std::size_t>(tt) * d.batch +
                                  b) *
                                     d.in_ch +
                                 gbase + c];
                }
                dw[(o * icg + c) * d.kernel + j] = acc;
            }
        }
        if (dbias) {
            double acc = 0.0;
            for (std::size_t t = 0; t < d.time; ++t)
                for (std::size_t b = 0; b < d.batch; ++b)
                    acc += dy[(t * d.batch + b) * d.out_ch + o];
            dbias[o] = acc;
        }
    }
}

void affine_forward(const double* x, const double* w, const double* b,
                    double* y, std::size_t rows, std::size_t in,
                    std::size_t out) {
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t o = 0; o < out; ++o) {
            double acc = b ? b[o] : 0.0;
            for (std::size_t i = 0; i < in; ++i)
                acc += x[r * in + i] * w[i * out + o];
            y[r * out + o] = acc;
        }
    }
}

} // namespace bitcn::kernels::ref
