#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <vector>

#include "bitcn/kernels.hpp"
#include "bitcn/rng.hpp"

using namespace bitcn;
using kernels::ConvDims;

namespace {

std::vector<double> randv(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

double max_abs_diff(const std::vector<double>& a,
                    const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

bool bitwise_equal(const std::vector<double>& a,
                   const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

struct ConvProblem {
    ConvDims d;
    std::vector<double> x, w, bias, dy;

    static ConvProblem make(std::size_t T, std::size_t B, std::size_t ic,
                            std::size_t oc, std::size_t k, std::size_t dil,
                            std::size_t g, bool fwd, Rng& rng) {
        ConvProblem p;
        p.d = {T, B, ic, oc, k, dil, g, fwd};
        p.x = randv(T * B * ic, rng);
        p.w = randv(oc * (ic / g) * k, rng);
        p.bias = randv(oc, rng);
        p.dy = randv(T * B * oc, rng);
        return p;
    }
};

} // namespace

TEST_CASE("optimized conv kernels agree with the reference loops") {
    Rng rng(42);
    // geometry sweep: directions, dilations past the sequence length,
    // grouped and ungrouped, non-divisible tap reach
    const std::size_t cases[][7] = {
        // T, B, ic, oc, k, dil, groups
        {16, 3, 4, 8, 3, 1, 1},  {16, 3, 4, 8, 3, 2, 2},
        {7, 1, 1, 1, 9, 4, 1},   {31, 2, 6, 12, 2, 16, 3},
        {5, 4, 8, 8, 5, 1, 4},   {12, 2, 12, 48, 9, 8, 1},
        {3, 1, 2, 4, 7, 2, 2},   {40, 1, 3, 9, 4, 32, 3},
    };
    kernels::set_threads(1);
    for (const auto& c : cases) {
        for (bool fwd : {false, true}) {
            ConvProblem p = ConvProblem::make(c[0], c[1], c[2], c[3], c[4],
                                              c[5], c[6], fwd, rng);
            std::vector<double> y_opt(p.dy.size()), y_ref(p.dy.size());
            kernels::conv_forward(p.x.data(), p.w.data(), p.bias.data(),
                                  y_opt.data(), p.d);
            kernels::ref::conv_forward(p.x.data(), p.w.data(), p.bias.data(),
                                       y_ref.data(), p.d);
            CHECK(max_abs_diff(y_opt, y_ref) < 1e-13);

            std::vector<double> dx_opt(p.x.size()), dx_ref(p.x.size());
            kernels::conv_grad_input(p.dy.data(), p.w.data(), dx_opt.data(),
                                     p.d);
            kernels::ref::conv_grad_input(p.dy.data(), p.w.data(),
                                          dx_ref.data(), p.d);
            CHECK(max_abs_diff(dx_opt, dx_ref) < 1e-13);

            std::vector<double> dw_opt(p.w.size()), dw_ref(p.w.size());
            std::vector<double> db_opt(p.d.out_ch), db_ref(p.d.out_ch);
            kernels::conv_grad_weights(p.dy.data(), p.x.data(), dw_opt.data(),
                                       db_opt.data(), p.d);
            kernels::ref::conv_grad_weights(p.dy.data(), p.x.data(),
                                            dw_ref.data(), db_ref.data(),
                                            p.d);
            CHECK(max_abs_diff(dw_opt, dw_ref) < 1e-12);
            CHECK(max_abs_diff(db_opt, db_ref) < 1e-12);
        }
    }
}

TEST_CASE("thread count never changes a single bit") {
    Rng rng(77);
    for (int threads : {2, 3, 8}) {
        ConvProblem p =
            ConvProblem::make(24, 5, 6, 12, 3, 4, 3, threads % 2 == 0, rng);

        kernels::set_threads(1);
        std::vector<double> y1(p.dy.size()), dx1(p.x.size()), dw1(p.w.size()),
            db1(p.d.out_ch);
        kernels::conv_forward(p.x.data(), p.w.data(), p.bias.data(), y1.data(),
                              p.d);
        kernels::conv_grad_input(p.dy.data(), p.w.data(), dx1.data(), p.d);
        kernels::conv_grad_weights(p.dy.data(), p.x.data(), dw1.data(),
                                   db1.data(), p.d);

        kernels::set_threads(threads);
        std::vector<double> yn(p.dy.size()), dxn(p.x.size()), dwn(p.w.size()),
            dbn(p.d.out_ch);
        kernels::conv_forward(p.x.data(), p.w.data(), p.bias.data(), yn.data(),
                              p.d);
        kernels::conv_grad_input(p.dy.data(), p.w.data(), dxn.data(), p.d);
        kernels::conv_grad_weights(p.dy.data(), p.x.data(), dwn.data(),
                                   dbn.data(), p.d);

        CHECK(bitwise_equal(y1, yn));
        CHECK(bitwise_equal(dx1, dxn));
        CHECK(bitwise_equal(dw1, dwn));
        CHECK(bitwise_equal(db1, dbn));
    }
    kernels::set_threads(1);
}

TEST_CASE("affine kernels match a naive transcription") {
    Rng rng(5);
    const std::size_t rows = 17, in = 7, out = 5;
    const auto x = randv(rows * in, rng);
    const auto w = randv(in * out, rng);
    const auto b = randv(out, rng);
    const auto dy = randv(rows * out, rng);

    kernels::set_threads(1);
    std::vector<double> y(rows * out), y_ref(rows * out);
    kernels::affine_forward(x.data(), w.data(), b.data(), y.data(), rows, in,
                            out);
    kernels::ref::affine_forward(x.data(), w.data(), b.data(), y_ref.data(),
                                 rows, in, out);
    CHECK(max_abs_diff(y, y_ref) < 1e-13);

    // independent oracles written straight from y = xW + b
    std::vector<double> dx(rows * in), dx_naive(rows * in, 0.0);
    kernels::affine_grad_input(dy.data(), w.data(), dx.data(), rows, in, out);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < in; ++i)
            for (std::size_t o = 0; o < out; ++o)
                dx_naive[r * in + i] += dy[r * out + o] * w[i * out + o];
    CHECK(max_abs_diff(dx, dx_naive) < 1e-13);

    std::vector<double> dw(in * out), db(out), dw_naive(in * out, 0.0),
        db_naive(out, 0.0);
    kernels::affine_grad_weights(dy.data(), x.data(), dw.data(), db.data(),
                                 rows, in, out);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < out; ++o) {
            db_naive[o] += dy[r * out + o];
            for (std::size_t i = 0; i < in; ++i)
                dw_naive[i * out + o] += x[r * in + i] * dy[r * out + o];
        }
    CHECK(max_abs_diff(dw, dw_naive) < 1e-12);
    CHECK(max_abs_diff(db, db_naive) < 1e-12);

    // multithreaded affine is also bit identical
    kernels::set_threads(4);
    std::vector<double> y4(rows * out), dx4(rows * in), dw4(in * out),
        db4(out);
    kernels::affine_forward(x.data(), w.data(), b.data(), y4.data(), rows, in,
                            out);
    kernels::affine_grad_input(dy.data(), w.data(), dx4.data(), rows, in,
                               out);
    kernels::affine_grad_weights(dy.data(), x.data(), dw4.data(), db4.data(),
                                 rows, in, out);
    CHECK(bitwise_equal(y, y4));
    CHECK(bitwise_equal(dx, dx4));
    CHECK(bitwise_equal(dw, dw4));
    CHECK(bitwise_equal(db, db4));
    kernels::set_threads(1);
}

TEST_CASE("gelu kernel evaluates the tanh approximation and its slope") {
    const double xs[] = {-3.0, -1.0, -1e-3, 0.0, 0.5, 1.0, 4.0};
    const std::size_t n = sizeof xs / sizeof *xs;
    std::vector<double> x(xs, xs + n), y(n);
    kernels::gelu_forward(x.data(), y.data(), n);
    const double c = std::sqrt(2.0 / 3.14159265358979323846);
    for (std::size_t i = 0; i < n; ++i) {
        const double inner = c * (x[i] + 0.044715 * x[i] * x[i] * x[i]);
        const double want = 0.5 * x[i] * (1.0 + std::tanh(inner));
        CHECK(y[i] == doctest::Approx(want).epsilon(1e-15));
    }

    // slope against central differences
    std::vector<double> dy(n, 1.0), dx(n);
    kernels::gelu_backward(x.data(), dy.data(), dx.data(), n);
    const double h = 1e-6;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> xp = {x[i] + h}, xm = {x[i] - h}, yp(1), ym(1);
        kernels::gelu_forward(xp.data(), yp.data(), 1);
        kernels::gelu_forward(xm.data(), ym.data(), 1);
        const double fd = (yp[0] - ym[0]) / (2.0 * h);
        CHECK(dx[i] == doctest::Approx(fd).epsilon(1e-6));
    }
}
