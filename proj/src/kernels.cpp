#include "bitcn/kernels.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace bitcn::kernels {

namespace {

int g_threads = 1;

// Weights arrive as (out_ch, in_ch/groups, kernel). The hot loops want the
// channel index innermost, so each kernel repacks once per call. The repack
// never changes summation order, only memory layout.
void repack_oc_k_ic(const double* w, double* wp, std::size_t oc,
                    std::size_t icg, std::size_t k) {
    for (std::size_t o = 0; o < oc; ++o)
        for (std::size_t j = 0; j < k; ++j)
            for (std::size_t c = 0; c < icg; ++c)
                wp[(o * k + j) * icg + c] = w[(o * icg + c) * k + j];
}

// (group, in_ch/groups, kernel, out_ch_per_group) for the input gradient.
void repack_ic_k_oc(const double* w, double* wp, std::size_t groups,
                    std::size_t ocg, std::size_t icg, std::size_t k) {
    for (std::size_t gi = 0; gi < groups; ++gi)
        for (std::size_t ol = 0; ol < ocg; ++ol)
            for (std::size_t c = 0; c < icg; ++c)
                for (std::size_t j = 0; j < k; ++j)
                    wp[((gi * icg + c) * k + j) * ocg + ol] =
                        w[((gi * ocg + ol) * icg + c) * k + j];
}

} // namespace

void set_threads(int n) { g_threads = n < 1 ? 1 : n; }

int threads() { return g_threads; }

void conv_forward(const double* x, const double* w, const double* bias,
                  double* y, const ConvDims& d) {
    const std::size_t T = d.time, B = d.batch, IC = d.in_ch, OC = d.out_ch;
    const std::size_t K = d.kernel, icg = IC / d.groups, ocg = OC / d.groups;
    const std::ptrdiff_t step =
        d.forward_dir ? static_cast<std::ptrdiff_t>(d.dilation)
                      : -static_cast<std::ptrdiff_t>(d.dilation);

    std::vector<double> wp(OC * K * icg);
    repack_oc_k_ic(w, wp.data(), OC, icg, K);
    const double* wpd = wp.data();

    const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(T * B);
#pragma omp parallel for num_threads(g_threads) if (g_threads > 1) \
    schedule(static)
    for (std::ptrdiff_t r = 0; r < rows; ++r) {
        const std::size_t t = static_cast<std::size_t>(r) / B;
        const std::size_t b = static_cast<std::size_t>(r) % B;
        double* yrow = y + (t * B + b) * OC;
        for (std::size_t o = 0; o < OC; ++o) {
            const std::size_t gbase = (o / ocg) * icg;
            const double* wrow = wpd + o * K * icg;
            double acc = bias ? bias[o] : 0.0;
            for (std::size_t j = 0; j < K; ++j) {
                const std::ptrdiff_t tt =
                    static_cast<std::ptrdiff_t>(t) +
                    step * static_cast<std::ptrdiff_t>(j);
                if (tt < 0 || tt >= static_cast<std::ptrdiff_t>(T)) continue;
                const double* xr =
                    x + (static_cast<std::size_t>(tt) * B + b) * IC + gbase;
                const double* wj = wrow + j * icg;
                for (std::size_t c = 0; c < icg; ++c) acc += wj[c] * xr[c];
            }
            yrow[o] = acc;
        }
    }
}

void conv_grad_input(const double* dy, const double* w, double* dx,
                     const ConvDims& d) {
    const std::size_t T = d.time, B = d.batch, IC = d.in_ch, OC = d.out_ch;
    const std::size_t K = d.kernel, G = d.groups;
    const std::size_t icg = IC / G, ocg = OC / G;
    // y[t] reads x[t + step*j], so dx[t] gathers dy[t - step*j].
    const std::ptrdiff_t step =
        d.forward_dir ? static_cast<std::ptrdiff_t>(d.dilation)
                      : -static_cast<std::ptrdiff_t>(d.dilation);

    std::vector<double> wp(OC * K * icg);
    repack_ic_k_oc(w, wp.data(), G, ocg, icg, K);
    const double* wpd = wp.data();

    const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(T * B);
#pragma omp parallel for num_threads(g_threads) if (g_threads > 1) \
    schedule(static)
    for (std::ptrdiff_t r = 0; r < rows; ++r) {
        const std::size_t t = static_cast<std::size_t>(r) / B;
        const std::size_t b = static_cast<std::size_t>(r) % B;
        double* dxrow = dx + (t * B + b) * IC;
        for (std::size_t ci = 0; ci < IC; ++ci) {
            const std::size_t gi = ci / icg;
            const std::size_t cl = ci % icg;
            const double* wc = wpd + (gi * icg + cl) * K * ocg;
            double acc = 0.0;
            for (std::size_t j = 0; j < K; ++j) {
                const std::ptrdiff_t tt =
                    static_cast<std::ptrdiff_t>(t) -
                    step * static_cast<std::ptrdiff_t>(j);
                if (tt < 0 || tt >= static_cast<std::ptrdiff_t>(T)) continue;
                const double* dyr =
                    dy + (static_cast<std::size_t>(tt) * B + b) * OC +
                    gi * ocg;
                const double* wj = wc + j * ocg;
                for (std::size_t ol = 0; ol < ocg; ++ol)
                    acc += wj[ol] * dyr[ol];
            }
            dxrow[ci] = acc;
        }
    }
}

void conv_grad_weights(const double* dy, const double* x, double* dw,
                       double* dbias, const ConvDims& d) {
    const std::size_t T = d.time, B = d.batch, IC = d.in_ch, OC = d.out_ch;
    const std::size_t K = d.kernel, icg = IC / d.groups, ocg = OC / d.groups;
    const std::ptrdiff_t step =
        d.forward_dir ? static_cast<std::ptrdiff_t>(d.dilation)
                      : -static_cast<std::ptrdiff_t>(d.dilation);

#pragma omp parallel for num_threads(g_threads) if (g_threads > 1) \
    schedule(static)
    for (std::ptrdiff_t oi = 0; oi < static_cast<std::ptrdiff_t>(OC); ++oi) {
        const std::size_t o = static_cast<std::size_t>(oi);
        const std::size_t gbase = (o / ocg) * icg;
        std::vector<double> acc(icg * K, 0.0);
        double bacc = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t b = 0; b < B; ++b) {
                const double g = dy[(t * B + b) * OC + o];
                bacc += g;
                if (g == 0.0) continue;
                for (std::size_t j = 0; j < K; ++j) {
                    const std::ptrdiff_t tt =
                        static_cast<std::ptrdiff_t>(t) +
                        step * static_cast<std::ptrdiff_t>(j);
                    if (tt < 0 || tt >= static_cast<std::ptrdiff_t>(T))
                        continue;
                    const double* xr =
                        x + (static_cast<std::size_t>(tt) * B + b) * IC +
                        gbase;
                    double* arow = acc.data() + j * icg;
                    for (std::size_t c = 0; c < icg; ++c)
                        arow[c] += g * xr[c];
                }
            }
        }
        for (std::size_t c = 0; c < icg; ++c)
            for (std::size_t j = 0; j < K; ++j)
                dw[(o * icg + c) * K + j] = acc[j * icg + c];
        if (dbias) dbias[o] = bacc;
    }
}

void affine_forward(const double* x, const double* w, const double* b,
                    double* y, std::size_t rows, std::size_t in,
                    std::size_t out) {
#pragma omp parallel for num_threads(g_threads) if (g_threads > 1) \
    schedule(static)
    for (std::ptrdiff_t ri = 0; ri < static_cast<std::ptrdiff_t>(rows);
         ++ri) {
        const std::size_t r = static_cast<std::size_t>(ri);
        double* yr = y + r * out;
        if (b)
            std::memcpy(yr, b, out * sizeof(double));
        else
            std::memset(yr, 0, out * sizeof(double));
        const double* xr = x + r * in;
        for (std::size_t i = 0; i < in; ++i) {
            const double xv = xr[i];
            if (xv == 0.0) continue;
            const double* wr = w + i * out;
            for (std::size_t o = 0; o < out; ++o) yr[o] += xv * wr[o];
        }
    }
}

void affine_grad_input(const double* dy, const double* w, double* dx,
                       std::size_t rows, std::size_t in, std::size_t out) {
#pragma omp parallel for num_threads(g_threads) if (g_threads > 1) \
    schedule(static)
    for (std::ptrdiff_t ri = 0; ri < static_cast<std::ptrdiff_t>(rows);
         ++ri) {
        const std::size_t r = static_cast<std::size_t>(ri);
        const double* dyr = dy + r * out;
        double* dxr = dx + r * in;
        for (std::size_t i = 0; i < in; ++i) {
            const double* wr = w + i * out;
            double acc = 0.0;
            for (std::size_t o = 0; o < out; ++o) acc += dyr[o] * wr[o];
            dxr[i] = acc;
        }
    }
}

void affine_grad_weights(const double* dy, const double* x, double* dw,
                         double* db, std::size_t rows, std::size_t in,
                         std::size_t out) {
#pragma omp parallel for num_threads(g_threads) if (g_threads > 1) \
    schedule(static)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(in); ++ii) {
        const std::size_t i = static_cast<std::size_t>(ii);
        double* dwr = dw + i * out;
        std::memset(dwr, 0, out * sizeof(double));
        for (std::size_t r = 0; r < rows; ++r) {
            const double xv = x[r * in + i];
            if (xv == 0.0) continue;
            const double* dyr = dy + r * out;
            for (std::size_t o = 0; o < out; ++o) dwr[o] += xv * dyr[o];
        }
    }
    if (db) {
        std::memset(db, 0, out * sizeof(double));
        for (std::size_t r = 0; r < rows; ++r) {
            const double* dyr = dy + r * out;
            for (std::size_t o = 0; o < out; ++o) db[o] += dyr[o];
        }
    }
}

namespace {

// tanh form of the GELU: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
constexpr double kGeluC = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);

} // namespace

void gelu_forward(const double* x, double* y, std::size_t n) {
#pragma omp parallel for num_threads(g_threads) if (g_threads > 1) \
    schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        const double v = x[i];
        const double u = kSqrt2OverPi * (v + kGeluC * v * v * v);
        y[i] = 0.5 * v * (1.0 + std::tanh(u));
    }
}

void gelu_backward(const double* x, const double* dy, double* dx,
                   std::size_t n) {
#pragma omp parallel for num_threads(g_threads) if (g_threads > 1) \
    schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        const double v = x[i];
        const double u = kSqrt2OverPi * (v + kGeluC * v * v * v);
        const double th = std::tanh(u);
        const double sech2 = 1.0 - th * th;
        const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluC * v * v);
        dx[i] = dy[i] * (0.5 * (1.0 + th) + 0.5 * v * sech2 * du);
    }
}

} // namespace bitcn::kernels
