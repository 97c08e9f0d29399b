// Release acceptance harness. Each criterion runs end to end and prints a
// single PASS/FAIL line; the process exits nonzero if any criterion fails.
// Everything runs single-threaded so timings and results are reproducible.
#include <array>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bitcn/data.hpp"
#include "bitcn/distributions.hpp"
#include "bitcn/evaluation.hpp"
#include "bitcn/kernels.hpp"
#include "bitcn/model.hpp"
#include "bitcn/rng.hpp"
#include "bitcn/training.hpp"

using namespace bitcn;

namespace {

struct Fail : std::runtime_error {
    explicit Fail(const std::string& why) : std::runtime_error(why) {}
};

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

Tensor randt(Shape shape, Rng& rng, double sd = 1.0, bool grad = false) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal(0.0, sd);
    return Tensor::of(std::move(shape), std::move(v), grad);
}

TemporalBlockParams make_block(std::size_t d_h, std::size_t k,
                               std::size_t dilation,
                               ConvSpec::Direction dir, Rng& rng,
                               std::size_t groups = 1) {
    TemporalBlockParams b;
    b.conv = {d_h, 4 * d_h, k, dilation, groups, dir};
    b.dropout_p = 0.0;
    b.conv_v = randt({4 * d_h, d_h / groups, k}, rng, 0.4);
    b.conv_g = randt({4 * d_h}, rng, 0.2);
    b.conv_b = randt({4 * d_h}, rng, 0.1);
    b.dense_v = randt({4 * d_h, 2 * d_h}, rng, 0.4);
    b.dense_g = randt({2 * d_h}, rng, 0.2);
    b.dense_b = randt({2 * d_h}, rng, 0.1);
    return b;
}

std::vector<TemporalBlockParams> make_stack(std::size_t d_h, std::size_t k,
                                            std::size_t depth,
                                            ConvSpec::Direction dir,
                                            Rng& rng) {
    std::vector<TemporalBlockParams> blocks;
    for (std::size_t i = 1; i <= depth; ++i)
        blocks.push_back(
            make_block(d_h, k, std::size_t{1} << (i - 1), dir, rng));
    return blocks;
}

// How many input steps (inclusive) can move the output at a fixed probe
// position. Bumps every channel at one offset and looks for any bit change.
std::size_t measured_reach(const std::vector<TemporalBlockParams>& blocks,
                           std::size_t T, std::size_t d_h, bool forward_dir,
                           Rng& rng) {
    NoGradGuard guard;
    const std::size_t probe = forward_dir ? 0 : T - 1;
    Tensor x = randt({T, 1, d_h}, rng);
    const std::vector<double> base =
        stack_forward(x, blocks, false, nullptr).values();

    std::size_t reach = 0;
    for (std::size_t offset = 0; offset < T; ++offset) {
        const std::size_t t = forward_dir ? probe + offset : probe - offset;
        std::vector<double> bumped = x.values();
        for (std::size_t c = 0; c < d_h; ++c) bumped[t * d_h + c] += 3.0;
        const std::vector<double> out =
            stack_forward(Tensor::of({T, 1, d_h}, std::move(bumped)), blocks,
                          false, nullptr)
                .values();
        // the skip sum carries d_h channels per step
        for (std::size_t c = 0; c < d_h; ++c)
            if (out[probe * d_h + c] != base[probe * d_h + c]) {
                reach = offset + 1;
                break;
            }
    }
    return reach;
}

// Zeroes every effective weight without tripping the zero-norm check:
// gains, biases, projections, heads and embeddings go to zero while the
// norm carriers v keep their random init.
void zero_effective_weights(BiTCNModel& model) {
    for (const auto& [name, tref] : model.parameters()) {
        if (name.size() >= 2 && name.rfind(".v") == name.size() - 2) continue;
        Tensor t = tref;
        for (double& v : t.values_mut()) v = 0.0;
    }
}

double sample_variance(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= double(v.size());
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return acc / double(v.size() - 1);
}

// ---------------------------------------------------------------- 1 ----

// Central finite differences against the recorded gradients, a few random
// coordinates per leaf. Returns the worst relative error seen.
double fd_worst(std::vector<Tensor> leaves,
                const std::function<Tensor()>& loss_fn,
                std::size_t coords, Rng& pick) {
    for (auto& l : leaves) l.zero_grad();
    backward(loss_fn());
    const double h = 1e-5;
    double worst = 0.0;
    for (auto& l : leaves) {
        const std::size_t n = l.size();
        const std::size_t reps = std::min(coords, n);
        for (std::size_t rep = 0; rep < reps; ++rep) {
            const std::size_t i = n <= coords ? rep : pick.uniform_index(n);
            NoGradGuard guard;
            const double saved = l.values()[i];
            l.values_mut()[i] = saved + h;
            const double up = loss_fn().scalar();
            l.values_mut()[i] = saved - h;
            const double dn = loss_fn().scalar();
            l.values_mut()[i] = saved;
            const double fd = (up - dn) / (2 * h);
            const double an = l.has_grad() ? l.grad()[i] : 0.0;
            const double rel = std::fabs(an - fd) /
                               std::max({1.0, std::fabs(an), std::fabs(fd)});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

double op_sweep(int c, Rng& rng, Rng& pick) {
    const std::size_t T = 3 + c % 3, B = 1 + c % 2, C = 2 + c % 3;
    double worst = 0.0;
    auto probe = [&](std::vector<Tensor> leaves,
                     const std::function<Tensor()>& fn) {
        worst = std::max(worst, fd_worst(std::move(leaves), fn, 4, pick));
    };
    const Tensor mask = randt({T, B, C}, rng);

    Tensor a = randt({T, B, C}, rng, 1.0, true);
    Tensor b = randt({T, B, C}, rng, 1.0, true);
    probe({a, b}, [&] { return sum(mul(add(a, b), mask)); });
    probe({a, b}, [&] { return sum(mul(mul(a, b), mask)); });
    probe({a}, [&] { return sum(mul(add_scalar(mul_scalar(a, -1.3), 0.7),
                                    mask)); });
    probe({a}, [&] { return sum(mul(gelu(a), mask)); });
    probe({a}, [&] { return sum(mul(softplus(a), mask)); });

    const std::size_t M = 2 + c % 2;
    Tensor w = randt({C, M}, rng, 0.5, true);
    Tensor bias = randt({M}, rng, 0.5, true);
    const Tensor mask2 = randt({T, B, M}, rng);
    probe({a, w, bias},
          [&] { return sum(mul(affine(a, w, bias), mask2)); });

    Tensor vr = randt({M, C, 2}, rng, 0.6, true);
    Tensor gr = randt({M}, rng, 0.4, true);
    const Tensor mask3 = randt({M, C, 2}, rng);
    probe({vr, gr}, [&] {
        return sum(mul(weight_norm(vr, gr, WeightNormAxis::per_row), mask3));
    });
    Tensor vc = randt({C, M}, rng, 0.6, true);
    Tensor gc = randt({M}, rng, 0.4, true);
    const Tensor mask4 = randt({C, M}, rng);
    probe({vc, gc}, [&] {
        return sum(
            mul(weight_norm(vc, gc, WeightNormAxis::per_column), mask4));
    });

    // dilated conv, both directions, with and without groups
    const std::size_t Tc = 6 + c % 3;
    const auto dir = c % 2 ? ConvSpec::Direction::forward
                           : ConvSpec::Direction::backward;
    const std::size_t groups = c % 3 == 0 ? 2 : 1;
    const std::size_t cin = 4, cout = 6 - 2 * (c % 2);
    const ConvSpec spec{cin, cout, 3, std::size_t{1} << (c % 2), groups, dir};
    Tensor x = randt({Tc, B, cin}, rng, 1.0, true);
    Tensor cw = randt({cout, cin / groups, 3}, rng, 0.5, true);
    Tensor cb = randt({cout}, rng, 0.3, true);
    const Tensor mask5 = randt({Tc, B, cout}, rng);
    probe({x, cw, cb},
          [&] { return sum(mul(dilated_conv(x, spec, cw, cb), mask5)); });

    // dropout with a fixed stream: the mask repeats across evaluations
    probe({a}, [&] {
        Rng drop(1234 + static_cast<std::uint64_t>(c));
        return sum(mul(dropout(a, 0.35, true, &drop), mask));
    });

    std::vector<std::int64_t> ids(T * B);
    for (auto& id : ids) id = static_cast<std::int64_t>(rng.uniform_index(5));
    const IndexTensor idx = IndexTensor::of({T, B}, ids);
    Tensor table = randt({5, 3}, rng, 0.7, true);
    const Tensor mask6 = randt({T, B, 3}, rng);
    probe({table},
          [&] { return sum(mul(embedding_lookup(idx, table), mask6)); });

    Tensor s = randt({6, B, 4}, rng, 1.0, true);
    const Tensor mask7 = randt({3, B, 4}, rng);
    probe({s}, [&] { return sum(mul(slice_time(s, 2, 3), mask7)); });
    const Tensor mask8 = randt({6, B, 2}, rng);
    probe({s}, [&] { return sum(mul(slice_channels(s, 1, 2), mask8)); });
    const Tensor mask9 = randt({T, B, 2 * C}, rng);
    probe({a, b},
          [&] { return sum(mul(concat_channels({a, b}), mask9)); });

    // both likelihoods, sigma kept positive through a softplus
    Tensor y = randt({T, B, 1}, rng);
    Tensor muv = randt({T, B, 1}, rng, 1.0, true);
    Tensor sraw = randt({T, B, 1}, rng, 0.7, true);
    for (Family f : {Family::student_t3, Family::gaussian})
        probe({muv, sraw}, [&, f] {
            return dist::nll(f, y, muv,
                             add_scalar(softplus(sraw), 1e-3));
        });
    return worst;
}

double composition_check(int c, Rng& rng, Rng& pick) {
    HyperParams hp;
    hp.state_size = 3 + static_cast<std::size_t>(c % 3) * 2 + (c % 2);
    hp.layers = 1 + c % 3;
    hp.forward_layers = 1 + (c + 1) % 3;
    hp.kernel_size = 2 + c % 3;
    hp.dropout_p = 0.0;
    hp.groups = 1 + c % 4;
    hp.distribution = c % 2 ? Family::gaussian : Family::student_t3;
    hp.softplus_mu = (c % 3) != 2;
    hp.forward_module = (c % 4) != 3;
    hp.join = (c % 5 == 4) ? HyperParams::Join::additive
                           : HyperParams::Join::concat;
    ModelDims dims;
    dims.cov_dim = c % 3;
    if (c % 2 == 0) {
        dims.cat_vocab = {4};
        dims.cat_emb = {2};
    }
    if (hp.forward_module && dims.cov_dim == 0 && dims.cat_vocab.empty())
        dims.cov_dim = 1;

    BiTCNModel model(hp, dims, 100 + static_cast<std::uint64_t>(c));
    const std::size_t T = 5 + c % 3, B = 1 + c % 2;
    const std::size_t Tc = T + (hp.forward_module ? c % 4 : 0);
    Tensor y_lag = randt({T, B, 1}, rng, 1.0, true);
    Tensor a_cov;
    if (dims.cov_dim) a_cov = randt({Tc, B, dims.cov_dim}, rng, 1.0, true);
    IndexTensor a_cat;
    if (!dims.cat_vocab.empty()) {
        std::vector<std::int64_t> ids(Tc * B);
        for (auto& id : ids)
            id = static_cast<std::int64_t>(rng.uniform_index(4));
        a_cat = IndexTensor::of({Tc, B, 1}, std::move(ids));
    }
    Tensor y_true = randt({T, B, 1}, rng);
    for (double& v : y_true.values_mut()) v = std::fabs(v) + 0.1;

    auto loss_fn = [&] {
        auto out = model.forward(y_lag, a_cov, a_cat, false, nullptr);
        return dist::nll(hp.distribution, y_true, out.mu, out.sigma);
    };
    std::vector<Tensor> leaves;
    for (const auto& [name, t] : model.parameters()) leaves.push_back(t);
    leaves.push_back(y_lag);
    if (dims.cov_dim) leaves.push_back(a_cov);
    return fd_worst(std::move(leaves), loss_fn, 2, pick);
}

std::string criterion_gradients() {
    double worst = 0.0;
    Rng rng(41);
    Rng pick(42);
    const int configs = 24;
    for (int c = 0; c < configs; ++c) {
        worst = std::max(worst, op_sweep(c, rng, pick));
        worst = std::max(worst, composition_check(c, rng, pick));
    }
    if (!(worst < 1e-4))
        throw Fail(fmt("max relative error %.3e >= 1e-4", worst));
    return fmt("max relative error %.3e over %d randomized configs",
               worst, configs);
}

// ---------------------------------------------------------------- 2 ----

std::string criterion_receptive_field() {
    Rng rng(7);
    const auto dir = ConvSpec::Direction::backward;

    // Zero padding caps the measured reach at the true receptive field for
    // any weights, so the max over a few random stacks is still exact; the
    // retries only guard against a draw whose edge-tap path saturates a
    // GELU and attenuates below one ulp.
    auto max_reach = [&](std::size_t k, std::size_t depth, std::size_t T,
                         std::size_t cap) {
        std::size_t best = 0;
        for (int attempt = 0; attempt < 3 && best < cap; ++attempt) {
            auto stack = make_stack(4, k, depth, dir, rng);
            best = std::max(best, measured_reach(stack, T, 4, false, rng));
        }
        return best;
    };

    const std::size_t r95 = max_reach(9, 5, 258, 249);
    if (r95 != 249)
        throw Fail(fmt("k=9 N=5 measured reach %zu, want 249", r95));

    const std::size_t r38 = max_reach(3, 8, 520, 511);
    if (r38 != 511)
        throw Fail(fmt("k=3 N=8 measured reach %zu, want 511", r38));

    return "k=9 N=5 reach 249 exact; k=3 N=8 reach 511 exact";
}

// ---------------------------------------------------------------- 3 ----

std::string criterion_causality() {
    NoGradGuard guard;
    Rng rng(13);
    const std::size_t T = 36, d_h = 4;
    std::size_t done = 0;

    for (int dir_i = 0; dir_i < 2; ++dir_i) {
        const bool fwd = dir_i == 1;
        for (int s = 0; s < 10; ++s) {
            const std::size_t k = 2 + s % 3, depth = 1 + s % 3;
            auto blocks =
                make_stack(d_h, k, depth,
                           fwd ? ConvSpec::Direction::forward
                               : ConvSpec::Direction::backward,
                           rng);
            Tensor x = randt({T, 1, d_h}, rng);
            const std::vector<double> base =
                stack_forward(x, blocks, false, nullptr).values();
            for (int p = 0; p < 10; ++p) {
                const std::size_t t_in = 1 + rng.uniform_index(T - 2);
                std::vector<double> bumped = x.values();
                bumped[t_in * d_h + rng.uniform_index(d_h)] += 0.9;
                const std::vector<double> out =
                    stack_forward(Tensor::of({T, 1, d_h}, std::move(bumped)),
                                  blocks, false, nullptr)
                        .values();
                // causal stacks cannot see t_in from any earlier step;
                // anticausal stacks cannot see it from any later step
                const std::size_t lo = fwd ? t_in + 1 : 0;
                const std::size_t hi = fwd ? T : t_in;
                for (std::size_t t = lo; t < hi; ++t)
                    for (std::size_t c = 0; c < d_h; ++c)
                        if (out[t * d_h + c] != base[t * d_h + c])
                            throw Fail(fmt(
                                "%s stack leaked: perturbation at t=%zu "
                                "moved output at t=%zu",
                                fwd ? "forward" : "backward", t_in, t));
                ++done;
            }
        }
    }
    return fmt("%zu probes, zero leakage either direction", done);
}

// ---------------------------------------------------------------- 4 ----

std::string criterion_constant_heads() {
    HyperParams hp;
    hp.state_size = 6;
    hp.layers = 2;
    hp.forward_layers = 3;
    hp.kernel_size = 3;
    hp.dropout_p = 0.0;
    hp.groups = 2;
    ModelDims dims;
    dims.cov_dim = 2;
    dims.cat_vocab = {7};
    dims.cat_emb = {3};
    BiTCNModel model(hp, dims, 55);
    zero_effective_weights(model);
    {
        Tensor bm = model.param("head_mu.b");
        bm.values_mut()[0] = 0.7;
        Tensor bs = model.param("head_sigma.b");
        bs.values_mut()[0] = -1.2;
    }
    const double want_mu = std::log1p(std::exp(0.7));
    const double want_sigma = std::log1p(std::exp(-1.2)) + hp.sigma_floor;

    Rng rng(5);
    std::size_t grids = 0;
    for (std::size_t T : {std::size_t{1}, std::size_t{5}, std::size_t{24}})
        for (std::size_t extra : {std::size_t{0}, std::size_t{8}})
            for (std::size_t B : {std::size_t{1}, std::size_t{3}}) {
                const std::size_t Tc = T + extra;
                Tensor y_lag = randt({T, B, 1}, rng);
                Tensor a_cov = randt({Tc, B, 2}, rng);
                std::vector<std::int64_t> ids(Tc * B);
                for (auto& id : ids)
                    id = static_cast<std::int64_t>(rng.uniform_index(7));
                const auto out = model.forward(
                    y_lag, a_cov, IndexTensor::of({Tc, B, 1}, ids), false,
                    nullptr);
                const Shape want{T, B, 1};
                if (out.mu.shape() != want || out.sigma.shape() != want)
                    throw Fail(fmt("bad output shape at T=%zu Tc=%zu B=%zu",
                                   T, Tc, B));
                for (double v : out.mu.values())
                    if (v != want_mu)
                        throw Fail(fmt("mu %.17g != softplus(b_mu) %.17g",
                                       v, want_mu));
                for (double v : out.sigma.values())
                    if (v != want_sigma)
                        throw Fail(fmt(
                            "sigma %.17g != softplus(b_sigma)+floor %.17g",
                            v, want_sigma));
                ++grids;
            }
    return fmt("mu and sigma exactly head-bias constants on %zu "
               "(T, T_c, batch) grids",
               grids);
}

// ---------------------------------------------------------------- 5 ----

std::string criterion_distributions() {
    // Simpson quadrature of the standard t(3) density over [-60, 60];
    // the tails beyond carry ~3e-5 of mass, inside the 1e-3 budget.
    const double a = -60.0, b = 60.0;
    const std::size_t n = 20000;
    const double h = (b - a) / double(2 * n);
    double integral = dist::t3_pdf(a) + dist::t3_pdf(b);
    for (std::size_t i = 1; i < 2 * n; ++i)
        integral += dist::t3_pdf(a + h * double(i)) * (i % 2 ? 4.0 : 2.0);
    integral *= h / 3.0;
    if (std::fabs(integral - 1.0) > 1e-3)
        throw Fail(fmt("t3 pdf integral %.8f not within 1e-3 of 1",
                       integral));

    double worst_id = 0.0;
    for (Family f : {Family::student_t3, Family::gaussian})
        for (double p : {0.001, 0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99,
                         0.999}) {
            const double q = dist::quantile(f, p);
            const double back = f == Family::student_t3
                                    ? dist::t3_cdf(q)
                                    : dist::gaussian_cdf(q);
            worst_id = std::max(worst_id, std::fabs(back - p));
        }
    if (worst_id > 1e-8)
        throw Fail(fmt("quantile/CDF identity off by %.3e > 1e-8",
                       worst_id));

    const Tensor y = Tensor::of({1, 1, 1}, {0.0});
    const Tensor mu = Tensor::of({1, 1, 1}, {0.0});
    const Tensor sig = Tensor::of({1, 1, 1}, {1.0});
    const double t3_mode = dist::t3_nll(y, mu, sig).scalar();
    const double t3_want =
        -std::log(2.0 / (std::numbers::pi * std::sqrt(3.0)));
    if (std::fabs(t3_mode - t3_want) > 1e-6)
        throw Fail(fmt("t3 NLL at mode %.12f, want %.12f", t3_mode,
                       t3_want));
    const double g_mode = dist::gaussian_nll(y, mu, sig).scalar();
    const double g_want = 0.5 * std::log(2.0 * std::numbers::pi);
    if (std::fabs(g_mode - g_want) > 1e-9)
        throw Fail(fmt("gaussian NLL at mode %.15f, want %.15f", g_mode,
                       g_want));

    return fmt("integral %.6f; identity %.1e; mode NLLs match", integral,
               worst_id);
}

// ---------------------------------------------------------------- 6 ----

std::string criterion_metric_oracles() {
    Rng rng(29);
    double worst = 0.0;
    auto track = [&](double got, double want) {
        worst = std::max(worst, std::fabs(got - want));
    };

    for (int c = 0; c < 100; ++c) {
        const std::size_t n = 1 + rng.uniform_index(12);
        std::vector<double> y(n), f(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = rng.normal(5.0, 3.0);
            f[i] = rng.normal(5.0, 3.0);
            if (c % 7 == 0 && i == 0) f[i] = 0.0;
            if (c % 11 == 0 && i == 0) y[i] = 0.0;
        }

        double sm = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double den = std::fabs(y[i]) + std::fabs(f[i]);
            if (den > 0.0) sm += 2.0 * std::fabs(y[i] - f[i]) / den;
        }
        track(smape(y, f), sm / double(n));

        double se = 0.0, abs_sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            se += (y[i] - f[i]) * (y[i] - f[i]);
            abs_sum += std::fabs(y[i]);
        }
        const double mean_abs = abs_sum / double(n);
        track(nrmse(y, f),
              std::sqrt(se / double(n)) /
                  (mean_abs > 0.0 ? mean_abs : 1.0));

        const double p =
            0.05 + 0.9 * double(rng.uniform_index(19)) / 18.0;
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            num += 2.0 *
                   std::fabs((y[i] - f[i]) * ((y[i] <= f[i] ? 1.0 : 0.0) - p));
            den += y[i];
        }
        const auto ql = quantile_loss(y, f, p);
        track(ql.value, den > 0.0 ? num / den : num);
        if ((den <= 0.0) != ql.unnormalized)
            throw Fail("quantile loss normalization flag wrong");
    }

    // boundary case: an all-zero forecast against nonzero actuals maxes
    // the symmetric error at exactly 2
    const std::vector<double> ones(5, 3.7), zeros(5, 0.0);
    if (smape(ones, zeros) != 2.0)
        throw Fail("sMAPE at a zero forecast is not exactly 2");

    // boundary case: Q(0.5) is the pinball identity sum|y-f| / sum y
    std::vector<double> y5(6), f5(6);
    for (std::size_t i = 0; i < 6; ++i) {
        y5[i] = 1.0 + double(i);
        f5[i] = 1.5 + 0.8 * double(i);
    }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
        num += std::fabs(y5[i] - f5[i]);
        den += y5[i];
    }
    track(quantile_loss(y5, f5, 0.5).value, num / den);

    std::array<double, 9> qs{};
    double mean_q = 0.0;
    for (std::size_t i = 0; i < 9; ++i) {
        qs[i] = 0.1 * double(i + 1);
        mean_q += qs[i];
    }
    track(mean_quantile(qs), mean_q / 9.0);

    if (!(worst < 1e-12))
        throw Fail(fmt("worst oracle deviation %.3e >= 1e-12", worst));
    return fmt("100 random cases + boundaries, worst deviation %.2e",
               worst);
}

// ---------------------------------------------------------------- 7 ----

std::string criterion_seasonal_overfit() {
    SynthOptions so;
    so.n_series = 20;
    so.length = 240;
    so.noise = 0.02;
    SeriesTable table = synth_generate(SynthKind::seasonal, so, 7);

    DatasetConfig dc;
    dc.t0 = 96;
    dc.horizon = 24;
    dc.cov_length = 120;
    dc.fourier = {{"hour_of_day", 24.0}};
    dc.embedding_dim = 8;
    dc.stride = 2;
    dc.sample_cap = 192;
    const WindowDataset data(std::move(table), dc);

    HyperParams hp; // reference configuration: 12 channels, 5 layers, k=9
    TrainConfig tc;
    tc.learning_rate = 1e-3;
    tc.batch_size = 16;
    tc.max_epochs = 30;
    tc.patience = 6;
    // the whole-window NLL gives every step a training signal, which the
    // tight epoch budget needs
    tc.horizon_only_loss = false;
    tc.record_timing = false;

    const auto& refs = data.test_windows();
    if (refs.empty()) throw Fail("empty test split");
    std::vector<ForecastResult> naive;
    for (const auto& r : refs)
        naive.push_back(seasonal_naive_forecast(data, r, 24));
    const double naive_mq = compute_metrics(naive).mq;

    std::size_t successes = 0;
    std::string per_seed;
    for (std::uint64_t seed : tc.seeds) {
        BiTCNModel model(hp, data.model_dims(), Rng::derive(seed, "init"));
        const RunRecord rec = train(model, data, tc, seed);
        if (rec.diverged) {
            per_seed += fmt(" s%llu:diverged",
                            static_cast<unsigned long long>(seed));
            continue;
        }
        const auto m = compute_metrics(decode_forecasts(
            model, data, refs, DecodeMode::analytic(), seed));
        const bool ok = m.smape < 0.05 && m.mq < naive_mq;
        successes += ok;
        per_seed += fmt(" s%llu:%s(smape %.3f, mq %.3f)",
                        static_cast<unsigned long long>(seed),
                        ok ? "ok" : "miss", m.smape, m.mq);
    }
    if (successes < 4)
        throw Fail(fmt("only %zu of 5 seeds reached sMAPE<0.05 and beat "
                       "naive mQ %.3f:%s",
                       successes, naive_mq, per_seed.c_str()));
    return fmt("%zu/5 seeds ok, naive mQ %.3f:%s", successes, naive_mq,
               per_seed.c_str());
}

// ---------------------------------------------------------------- 8 ----

std::string criterion_forward_benefit() {
    SynthOptions so;
    so.n_series = 10;
    so.length = 200;
    so.noise = 0.02;
    so.beta = 2.0;
    so.promo_rate = 0.3;
    SeriesTable table = synth_generate(SynthKind::future_driven, so, 21);

    // precondition: the next-step promo explains at least half of the
    // within-series variance
    double share_acc = 0.0;
    for (const auto& s : table.series) {
        const auto& promo = *s.covariate("promo");
        const std::size_t n = s.target.size() - 1;
        double my = 0.0, mr = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            my += s.target[t];
            mr += s.target[t] - so.beta * promo[t + 1];
        }
        my /= double(n);
        mr /= double(n);
        double vy = 0.0, vr = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            vy += (s.target[t] - my) * (s.target[t] - my);
            const double r = s.target[t] - so.beta * promo[t + 1] - mr;
            vr += r * r;
        }
        share_acc += 1.0 - vr / vy;
    }
    const double share = share_acc / double(table.series.size());
    if (share < 0.5)
        throw Fail(fmt("promo explains only %.2f of variance", share));

    DatasetConfig dc;
    dc.t0 = 48;
    dc.horizon = 12;
    dc.cov_length = 61; // one past the window: the last step's driver
    dc.covariate_columns = {"promo"};
    dc.embedding_dim = 8;
    dc.stride = 2;
    dc.sample_cap = 256;
    const WindowDataset data(std::move(table), dc);

    TrainConfig tc;
    tc.learning_rate = 1e-3;
    tc.batch_size = 64;
    tc.max_epochs = 12;
    tc.patience = 12;
    tc.record_timing = false;

    const auto& refs = data.test_windows();
    if (refs.empty()) throw Fail("empty test split");

    auto arm_mq = [&](bool forward_module) {
        HyperParams hp;
        hp.forward_module = forward_module;
        double acc = 0.0;
        std::size_t ok = 0;
        for (std::uint64_t seed : tc.seeds) {
            BiTCNModel model(hp, data.model_dims(),
                             Rng::derive(seed, "init"));
            const RunRecord rec = train(model, data, tc, seed);
            if (rec.diverged) continue;
            acc += compute_metrics(decode_forecasts(model, data, refs,
                                                    DecodeMode::analytic(),
                                                    seed))
                       .mq;
            ++ok;
        }
        if (ok == 0) throw Fail("every seed diverged");
        return acc / double(ok);
    };

    const double full = arm_mq(true);
    const double ablated = arm_mq(false);
    if (!(full <= 0.8 * ablated))
        throw Fail(fmt("full mQ %.4f not 20%% below ablated mQ %.4f "
                       "(promo share %.2f)",
                       full, ablated, share));
    return fmt("mean mQ full %.4f vs ablated %.4f (%.0f%% lower; promo "
               "share %.2f)",
               full, ablated, 100.0 * (1.0 - full / ablated), share);
}

// ---------------------------------------------------------------- 9 ----

std::string criterion_heavy_tail_stability() {
    SynthOptions so;
    so.n_series = 8;
    so.length = 200;
    so.noise = 0.1;
    SeriesTable table = synth_generate(SynthKind::heavy_tailed, so, 33);

    DatasetConfig dc;
    dc.t0 = 48;
    dc.horizon = 12;
    dc.cov_length = 60;
    dc.embedding_dim = 8;
    dc.stride = 2;
    dc.sample_cap = 256;
    const WindowDataset data(std::move(table), dc);

    TrainConfig tc;
    tc.learning_rate = 1e-3;
    tc.batch_size = 64;
    tc.max_epochs = 10;
    tc.patience = 10;
    tc.clip.mode = ClipSetting::Mode::none; // both arms unclipped
    tc.record_timing = false;

    auto run_arm = [&](Family family, std::size_t& diverged,
                       bool& all_finite) {
        HyperParams hp;
        hp.distribution = family;
        std::vector<double> nlls;
        diverged = 0;
        all_finite = true;
        for (std::uint64_t seed : tc.seeds) {
            BiTCNModel model(hp, data.model_dims(),
                             Rng::derive(seed, "init"));
            const RunRecord rec = train(model, data, tc, seed);
            if (rec.diverged) {
                ++diverged;
                continue;
            }
            for (const auto& e : rec.epochs)
                if (!std::isfinite(e.train_nll) ||
                    !std::isfinite(e.val_nll))
                    all_finite = false;
            nlls.push_back(rec.best_val_nll);
        }
        return nlls;
    };

    std::size_t t3_div = 0, g_div = 0;
    bool t3_finite = true, g_finite = true;
    const auto t3_nlls = run_arm(Family::student_t3, t3_div, t3_finite);
    const auto g_nlls = run_arm(Family::gaussian, g_div, g_finite);

    if (t3_div != 0 || !t3_finite || t3_nlls.size() != 5)
        throw Fail(fmt("t3 arm not clean: %zu diverged, finite=%d", t3_div,
                       int(t3_finite)));

    const double var_t3 = sample_variance(t3_nlls);
    const double var_g = sample_variance(g_nlls);
    const bool unstable =
        g_div > 0 || !g_finite || var_g >= 2.0 * var_t3;
    if (!unstable)
        throw Fail(fmt("gaussian arm looks stable: 0 divergences, "
                       "val-NLL variance %.3e vs t3 %.3e",
                       var_g, var_t3));
    return fmt("t3 5/5 finite; gaussian: %zu divergence(s), val-NLL "
               "variance %.3e vs t3 %.3e",
               g_div, var_g, var_t3);
}

// --------------------------------------------------------------- 10 ----

std::string criterion_parameter_accounting() {
    ModelDims dims;
    dims.cov_dim = 2;
    dims.cat_vocab = {5};
    dims.cat_emb = {4};

    struct Cfg {
        std::size_t d_h, layers, fwd, k, groups;
    };
    for (const Cfg& c : {Cfg{12, 5, 6, 9, 4}, Cfg{8, 3, 4, 3, 2},
                         Cfg{6, 2, 2, 5, 3}}) {
        HyperParams hp;
        hp.state_size = c.d_h;
        hp.layers = c.layers;
        hp.forward_layers = c.fwd;
        hp.kernel_size = c.k;
        hp.groups = c.groups;
        HyperParams ab = hp;
        ab.forward_module = false;
        const std::size_t full =
            BiTCNModel(hp, dims, 1).parameter_count();
        const std::size_t ablated =
            BiTCNModel(ab, dims, 1).parameter_count();
        if (!(ablated < full))
            throw Fail(fmt("ablated %zu not below full %zu at d_h=%zu",
                           ablated, full, c.d_h));
    }

    // grouped conv weight tensors hold exactly 1/g of the ungrouped count
    for (std::size_t g : {std::size_t{2}, std::size_t{4}}) {
        HyperParams grouped;
        grouped.groups = g;
        HyperParams ungrouped;
        ungrouped.groups = 1;
        const BiTCNModel mg(grouped, dims, 2);
        const BiTCNModel m1(ungrouped, dims, 2);
        for (std::size_t i = 0; i < mg.forward_blocks().size(); ++i) {
            const std::size_t got = mg.forward_blocks()[i].conv_v.size();
            const std::size_t base = m1.forward_blocks()[i].conv_v.size();
            if (got * g != base)
                throw Fail(fmt("grouped conv params %zu != ungrouped "
                               "%zu / %zu",
                               got, base, g));
        }
    }

    HyperParams hp12, hp24;
    hp24.state_size = 24;
    const std::size_t n12 = BiTCNModel(hp12, dims, 3).parameter_count();
    const std::size_t n24 = BiTCNModel(hp24, dims, 3).parameter_count();
    if (!(n24 > 2 * n12))
        throw Fail(fmt("doubling d_h: %zu not more than twice %zu", n24,
                       n12));
    return fmt("ablated < full on 3 configs; grouped = ungrouped/g; "
               "d_h 12->24: %zu -> %zu params",
               n12, n24);
}

// --------------------------------------------------------------- 11 ----

std::string criterion_early_stopping() {
    const double trace[] = {3.0, 2.0, 2.1, 2.2, 2.3, 2.4, 2.5};
    EarlyStopper es;
    es.patience = 5;
    std::size_t stopped = 0;
    for (std::size_t e = 1; e <= 7; ++e) {
        es.update(trace[e - 1], e);
        if (es.should_stop()) {
            stopped = e;
            break;
        }
    }
    if (stopped != 7 || es.best_epoch != 2 || es.best != 2.0)
        throw Fail(fmt("trace stopped at %zu (best %zu, %.3f); want stop 7 "
                       "best 2",
                       stopped, es.best_epoch, es.best));
    if (stopped - es.best_epoch != es.patience)
        throw Fail("stop epoch minus best epoch is not the patience");

    // the same identity holds on arbitrary traces whenever the stopper
    // fires before the epoch budget
    Rng rng(17);
    for (int c = 0; c < 50; ++c) {
        EarlyStopper s;
        s.patience = 1 + rng.uniform_index(6);
        std::size_t stop = 0;
        for (std::size_t e = 1; e <= 200; ++e) {
            s.update(1.0 + rng.uniform(), e);
            if (s.should_stop()) {
                stop = e;
                break;
            }
        }
        if (stop == 0) continue; // budget bound, identity not claimed
        if (stop - s.best_epoch != s.patience)
            throw Fail(fmt("random trace: stop %zu - best %zu != patience "
                           "%zu",
                           stop, s.best_epoch, s.patience));
    }
    return "hand trace stops at 7 with best 2; stop - best == patience on "
           "random traces";
}

// --------------------------------------------------------------- 12 ----

std::string criterion_determinism() {
    kernels::set_threads(1);
    SynthOptions so;
    so.n_series = 4;
    so.length = 160;
    SeriesTable table = synth_generate(SynthKind::seasonal, so, 3);

    DatasetConfig dc;
    dc.t0 = 24;
    dc.horizon = 8;
    dc.cov_length = 32;
    dc.fourier = {{"hour_of_day", 24.0}};
    dc.embedding_dim = 4;
    dc.stride = 4;
    const WindowDataset data(std::move(table), dc);

    HyperParams hp;
    hp.state_size = 6;
    hp.layers = 2;
    hp.forward_layers = 2;
    hp.kernel_size = 3;
    hp.groups = 2;
    TrainConfig tc;
    tc.learning_rate = 2e-3;
    tc.batch_size = 32;
    tc.max_epochs = 4;
    tc.record_timing = false;

    auto run_once = [&](const std::string& path) {
        BiTCNModel model(hp, data.model_dims(), Rng::derive(1, "init"));
        const RunRecord rec = train(model, data, tc, 1);
        CheckpointExtras ex;
        ex.epoch = rec.best_epoch;
        ex.build = "acceptance";
        ex.config_echo = "determinism probe";
        save_checkpoint(model, path, &ex);
        return rec.to_text();
    };

    const std::string p1 = "/tmp/bitcn_accept_det1.ckpt";
    const std::string p2 = "/tmp/bitcn_accept_det2.ckpt";
    const std::string r1 = run_once(p1);
    const std::string r2 = run_once(p2);
    if (r1 != r2) throw Fail("run records differ between identical runs");

    auto slurp = [](const std::string& p) {
        std::ifstream f(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(f),
                           std::istreambuf_iterator<char>());
    };
    const std::string b1 = slurp(p1), b2 = slurp(p2);
    if (b1.empty() || b1 != b2)
        throw Fail("checkpoint bytes differ between identical runs");
    return fmt("records and %zu-byte checkpoints bit-identical", b1.size());
}

} // namespace

int main() {
    kernels::set_threads(1);
    struct Criterion {
        const char* name;
        std::function<std::string()> fn;
        double budget_s; // 0 = no stated budget
    };
    const Criterion criteria[] = {
        {"gradient checks", criterion_gradients, 120.0},
        {"receptive field exactness", criterion_receptive_field, 60.0},
        {"causal separation", criterion_causality, 0.0},
        {"constant-head conformance", criterion_constant_heads, 0.0},
        {"distribution identities", criterion_distributions, 0.0},
        {"metric oracles", criterion_metric_oracles, 0.0},
        {"seasonal overfit", criterion_seasonal_overfit, 600.0},
        {"forward-module benefit", criterion_forward_benefit, 900.0},
        {"heavy-tail stability", criterion_heavy_tail_stability, 900.0},
        {"parameter accounting", criterion_parameter_accounting, 0.0},
        {"early stopping", criterion_early_stopping, 0.0},
        {"determinism", criterion_determinism, 0.0},
    };

    int failures = 0;
    int idx = 0;
    for (const auto& c : criteria) {
        ++idx;
        const auto start = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = true;
        try {
            detail = c.fn();
        } catch (const std::exception& e) {
            ok = false;
            detail = e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          start)
                .count();
        if (ok && c.budget_s > 0.0 && secs > c.budget_s) {
            ok = false;
            detail = fmt("over budget: %.1fs > %.0fs (%s)", secs,
                         c.budget_s, detail.c_str());
        }
        failures += ok ? 0 : 1;
        std::printf("criterion %2d %s (%6.1fs) %s: %s\n", idx,
                    ok ? "PASS" : "FAIL", secs, c.name, detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/12 criteria passed\n", 12 - failures);
    return failures == 0 ? 0 : 1;
}
