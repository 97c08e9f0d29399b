#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>

#include "bitcn/errors.hpp"
#include "bitcn/rng.hpp"
#include "bitcn/tensor.hpp"

using namespace bitcn;

namespace {

// Max relative error between analytic gradients and central finite
// differences over every requires_grad input. The builder must construct a
// fresh scalar loss from the same input handles on every call.
double grad_check(const std::function<Tensor()>& loss_fn,
                  std::vector<Tensor> inputs, double h = 1e-5) {
    for (auto& t : inputs) t.zero_grad();
    Tensor loss = loss_fn();
    backward(loss);

    double worst = 0.0;
    for (auto& t : inputs) {
        REQUIRE(t.has_grad());
        const std::vector<double> analytic = t.grad();
        std::vector<double>& vals = t.values_mut();
        for (std::size_t j = 0; j < vals.size(); ++j) {
            const double keep = vals[j];
            double lp, lm;
            {
                NoGradGuard no_grad;
                vals[j] = keep + h;
                lp = loss_fn().scalar();
                vals[j] = keep - h;
                lm = loss_fn().scalar();
                vals[j] = keep;
            }
            const double fd = (lp - lm) / (2.0 * h);
            const double denom =
                std::max({1.0, std::fabs(fd), std::fabs(analytic[j])});
            worst = std::max(worst, std::fabs(analytic[j] - fd) / denom);
        }
    }
    return worst;
}

Tensor randn(const Shape& shape, Rng& rng, bool rg = true) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return Tensor::of(shape, std::move(v), rg);
}

} // namespace

TEST_CASE("shape bookkeeping and invalid construction") {
    Tensor t = Tensor::zeros({2, 3});
    CHECK(t.rank() == 2);
    CHECK(t.size() == 6);
    CHECK(t.dim(1) == 3);
    CHECK_THROWS_AS(Tensor::of({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
    CHECK_THROWS_AS(Tensor::of({0, 2}, {}), ShapeError);
}

TEST_CASE("dilated conv matches the hand-evaluated examples") {
    // x = [1,2,3,4,5], one channel, one batch entry
    const Tensor x = Tensor::of({5, 1, 1}, {1, 2, 3, 4, 5});
    const Tensor w = Tensor::of({1, 1, 2}, {1, 1});
    const Tensor b = Tensor::of({1}, {0});
    ConvSpec spec;
    spec.in_channels = 1;
    spec.out_channels = 1;
    spec.kernel = 2;
    spec.dilation = 2;

    SUBCASE("backward direction left-pads: y_s = x_s + x_{s-2}") {
        spec.direction = ConvSpec::Direction::backward;
        const Tensor y = dilated_conv(x, spec, w, b);
        const std::vector<double> want = {1, 2, 4, 6, 8};
        for (std::size_t i = 0; i < 5; ++i)
            CHECK(y.values()[i] == doctest::Approx(want[i]).epsilon(1e-15));
    }
    SUBCASE("forward direction right-pads: y_s = x_s + x_{s+2}") {
        spec.direction = ConvSpec::Direction::forward;
        const Tensor y = dilated_conv(x, spec, w, b);
        const std::vector<double> want = {4, 6, 8, 4, 5};
        for (std::size_t i = 0; i < 5; ++i)
            CHECK(y.values()[i] == doctest::Approx(want[i]).epsilon(1e-15));
    }
    SUBCASE("k=1 is the identity for any direction and dilation") {
        ConvSpec id;
        id.kernel = 1;
        id.dilation = 7;
        const Tensor w1 = Tensor::of({1, 1, 1}, {1});
        for (auto dir :
             {ConvSpec::Direction::backward, ConvSpec::Direction::forward}) {
            id.direction = dir;
            const Tensor y = dilated_conv(x, id, w1, b);
            for (std::size_t i = 0; i < 5; ++i)
                CHECK(y.values()[i] == x.values()[i]);
        }
    }
}

TEST_CASE("conv rejects bad geometry") {
    const Tensor x = Tensor::of({4, 1, 4}, std::vector<double>(16, 1.0));
    ConvSpec spec;
    spec.in_channels = 4;
    spec.out_channels = 6;
    spec.kernel = 3;
    spec.groups = 4; // 6 % 4 != 0
    const Tensor w = Tensor::zeros({6, 1, 3});
    const Tensor b = Tensor::zeros({6});
    CHECK_THROWS_AS(dilated_conv(x, spec, w, b), ShapeError);
}

TEST_CASE("gelu matches the tanh approximation") {
    const Tensor x = Tensor::of({3}, {0.0, 1.0, -10.0});
    const Tensor y = gelu(x);
    CHECK(y.values()[0] == 0.0);
    CHECK(y.values()[1] == doctest::Approx(0.84119).epsilon(1e-4));
    // the tanh form saturates to a signed zero far in the left tail
    CHECK(y.values()[2] <= 0.0);
    CHECK(y.values()[2] > -1e-3);
}

TEST_CASE("softplus saturates safely in both directions") {
    const Tensor x = Tensor::of({3}, {0.0, 50.0, -50.0});
    const Tensor y = softplus(x);
    CHECK(y.values()[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(y.values()[1] == doctest::Approx(50.0).epsilon(1e-9));
    CHECK(y.values()[2] > 0.0);
    CHECK(y.values()[2] <= 1e-20);
}

TEST_CASE("affine evaluates x W + b over the trailing dimension") {
    const Tensor x = Tensor::of({1, 2}, {1, 2});
    const Tensor w = Tensor::of({2, 1}, {1, 1});
    const Tensor b = Tensor::of({1}, {3});
    const Tensor y = affine(x, w, b);
    CHECK(y.values()[0] == 6.0);

    const Tensor eye = Tensor::of({2, 2}, {1, 0, 0, 1});
    const Tensor zb = Tensor::zeros({2});
    const Tensor same = affine(x, eye, zb);
    CHECK(same.values()[0] == 1.0);
    CHECK(same.values()[1] == 2.0);
}

TEST_CASE("dropout") {
    Rng rng(7);
    const Tensor x = Tensor::of({4}, {1, 2, 3, 4});
    SUBCASE("identity when p=0 or when not training") {
        const Tensor a = dropout(x, 0.0, true, &rng);
        const Tensor b = dropout(x, 0.5, false, nullptr);
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(a.values()[i] == x.values()[i]);
            CHECK(b.values()[i] == x.values()[i]);
        }
    }
    SUBCASE("inverted scaling keeps the mean near 1") {
        const std::size_t n = 100000;
        const Tensor ones = Tensor::of({n}, std::vector<double>(n, 1.0));
        const Tensor y = dropout(ones, 0.5, true, &rng);
        double mean = 0.0;
        for (double v : y.values()) mean += v;
        mean /= double(n);
        CHECK(mean == doctest::Approx(1.0).epsilon(0.02));
    }
    SUBCASE("p outside [0,1) is rejected") {
        CHECK_THROWS_AS(dropout(x, 1.0, true, &rng), ShapeError);
        CHECK_THROWS_AS(dropout(x, -0.1, true, &rng), ShapeError);
    }
}

TEST_CASE("embedding lookup gathers rows and scatters gradients") {
    Tensor table = Tensor::of({2, 2}, {1, 1, 2, 2}, true);
    const IndexTensor ids = IndexTensor::of({2}, {0, 1});
    const Tensor out = embedding_lookup(ids, table);
    CHECK(out.values() == std::vector<double>{1, 1, 2, 2});

    // repeated id accumulates gradient
    const IndexTensor twice = IndexTensor::of({2}, {0, 0});
    table.zero_grad();
    const Tensor g = sum(embedding_lookup(twice, table));
    backward(g);
    CHECK(table.grad()[0] == 2.0);
    CHECK(table.grad()[1] == 2.0);
    CHECK(table.grad()[2] == 0.0);

    const IndexTensor oov = IndexTensor::of({1}, {2});
    CHECK_THROWS_AS(embedding_lookup(oov, table), DataError);
}

TEST_CASE("weight norm reparameterization") {
    SUBCASE("hand case: v=[3,4], g=10 gives w=[6,8]") {
        const Tensor v = Tensor::of({2}, {3, 4});
        const Tensor g = Tensor::of({1}, {10});
        const Tensor w = weight_norm(v, g, WeightNormAxis::whole);
        CHECK(w.values()[0] == doctest::Approx(6.0).epsilon(1e-12));
        CHECK(w.values()[1] == doctest::Approx(8.0).epsilon(1e-12));
    }
    SUBCASE("scale invariance in v") {
        Rng rng(3);
        const Tensor v = randn({4}, rng, false);
        const Tensor g = Tensor::of({1}, {1.7});
        const Tensor w1 = weight_norm(v, g, WeightNormAxis::whole);
        std::vector<double> scaled = v.values();
        for (double& x : scaled) x *= 5.0;
        const Tensor v5 = Tensor::of({4}, std::move(scaled));
        const Tensor w2 = weight_norm(v5, g, WeightNormAxis::whole);
        for (std::size_t i = 0; i < 4; ++i)
            CHECK(w1.values()[i] ==
                  doctest::Approx(w2.values()[i]).epsilon(1e-12));
    }
    SUBCASE("unit-norm v with g=1 is the identity") {
        const Tensor v = Tensor::of({2}, {0.6, 0.8});
        const Tensor g = Tensor::of({1}, {1.0});
        const Tensor w = weight_norm(v, g, WeightNormAxis::whole);
        CHECK(w.values()[0] == doctest::Approx(0.6).epsilon(1e-12));
        CHECK(w.values()[1] == doctest::Approx(0.8).epsilon(1e-12));
    }
    SUBCASE("zero-norm slice is a numeric error") {
        const Tensor v = Tensor::zeros({2});
        const Tensor g = Tensor::of({1}, {1.0});
        CHECK_THROWS_AS(weight_norm(v, g, WeightNormAxis::whole),
                        NumericError);
    }
}

TEST_CASE("backward basics") {
    SUBCASE("loss = sum(x) gives all-ones gradient") {
        Tensor x = Tensor::of({3}, {5, -1, 2}, true);
        backward(sum(x));
        CHECK(x.grad() == std::vector<double>{1, 1, 1});
    }
    SUBCASE("loss = sum(x*x) gives 2x") {
        Tensor x = Tensor::of({3}, {1, 2, 3}, true);
        backward(sum(mul(x, x)));
        CHECK(x.grad()[0] == doctest::Approx(2.0));
        CHECK(x.grad()[1] == doctest::Approx(4.0));
        CHECK(x.grad()[2] == doctest::Approx(6.0));
    }
    SUBCASE("gradients accumulate until zero_grad") {
        Tensor x = Tensor::of({2}, {1, 1}, true);
        backward(sum(x));
        backward(sum(x));
        CHECK(x.grad()[0] == 2.0);
        x.zero_grad();
        backward(sum(x));
        CHECK(x.grad()[0] == 1.0);
    }
    SUBCASE("non-scalar loss is rejected") {
        Tensor x = Tensor::of({2}, {1, 2}, true);
        CHECK_THROWS_AS(backward(add(x, x)), ShapeError);
    }
    SUBCASE("NoGradGuard suppresses graph recording") {
        Tensor x = Tensor::of({2}, {1, 2}, true);
        Tensor y;
        {
            NoGradGuard no_grad;
            y = sum(mul(x, x));
        }
        backward(y); // y has no parents; nothing to do
        CHECK_FALSE(x.has_grad());
    }
    SUBCASE("NaN during backward names the node") {
        Tensor x = Tensor::of({1}, {0.0}, true);
        // d/dx sqrt-like op via custom: use mul to build x * (1/x) path?
        // Simpler: inject NaN through values and catch at the nll level is
        // covered elsewhere; here check the error type surfaces from a
        // crafted op.
        Tensor bad = detail::make_op(
            "nan_source", {1}, {1.0}, {x}, [&x](const std::vector<double>&) {
                detail::accumulate(
                    x, std::vector<double>{std::nan("")}.data(), 1);
            });
        Tensor loss = mul_scalar(bad, std::nan(""));
        CHECK_THROWS_AS(backward(loss), NumericError);
    }
}

TEST_CASE("slice and concat semantics") {
    Tensor x = Tensor::of({5, 1, 1}, {1, 2, 3, 4, 5}, true);
    SUBCASE("full-range slice is the identity") {
        const Tensor y = slice_time(x, 0, 5);
        CHECK(y.values() == x.values());
    }
    SUBCASE("backward scatters zeros outside the slice") {
        backward(sum(slice_time(x, 0, 2)));
        CHECK(x.grad() == std::vector<double>{1, 1, 0, 0, 0});
    }
    SUBCASE("out-of-range slice throws") {
        CHECK_THROWS_AS(slice_time(x, 3, 3), ShapeError);
    }
    SUBCASE("channel concat shape contract and backward split") {
        Rng rng(11);
        Tensor a = randn({4, 2, 3}, rng);
        Tensor b = randn({4, 2, 5}, rng);
        const Tensor c = concat_channels({a, b});
        CHECK(c.dim(0) == 4);
        CHECK(c.dim(1) == 2);
        CHECK(c.dim(2) == 8);
        backward(sum(c));
        CHECK(a.grad() == std::vector<double>(a.size(), 1.0));
        CHECK(b.grad() == std::vector<double>(b.size(), 1.0));
        Tensor undefined;
        const Tensor only = concat_channels({a, undefined});
        CHECK(only.values() == a.values());
    }
    SUBCASE("leading-dim mismatch throws") {
        Tensor a = Tensor::zeros({4, 2, 3});
        Tensor b = Tensor::zeros({3, 2, 5});
        CHECK_THROWS_AS(concat_channels({a, b}), ShapeError);
    }
}

TEST_CASE("finite differences validate every primitive gradient") {
    Rng rng(1234);
    double worst = 0.0;

    // elementwise chain: softplus(gelu(x)) * y summed
    {
        Tensor x = randn({3, 2, 2}, rng);
        Tensor y = randn({3, 2, 2}, rng);
        worst = std::max(
            worst, grad_check(
                       [&] {
                           return sum(mul(softplus(gelu(x)), y));
                       },
                       {x, y}));
    }
    // affine
    {
        Tensor x = randn({4, 3}, rng);
        Tensor w = randn({3, 2}, rng);
        Tensor b = randn({2}, rng);
        worst = std::max(worst, grad_check(
                                    [&] {
                                        return sum(gelu(affine(x, w, b)));
                                    },
                                    {x, w, b}));
    }
    // dilated conv, both directions, grouped and ungrouped
    struct Cfg {
        std::size_t T, B, ic, oc, k, d, g;
        ConvSpec::Direction dir;
    };
    const Cfg cfgs[] = {
        {7, 2, 3, 4, 3, 2, 1, ConvSpec::Direction::backward},
        {9, 1, 4, 4, 2, 4, 2, ConvSpec::Direction::forward},
        {5, 3, 6, 6, 3, 1, 3, ConvSpec::Direction::backward},
        {6, 2, 2, 6, 4, 2, 2, ConvSpec::Direction::forward},
    };
    for (const Cfg& c : cfgs) {
        Tensor x = randn({c.T, c.B, c.ic}, rng);
        Tensor w = randn({c.oc, c.ic / c.g, c.k}, rng);
        Tensor b = randn({c.oc}, rng);
        ConvSpec spec;
        spec.in_channels = c.ic;
        spec.out_channels = c.oc;
        spec.kernel = c.k;
        spec.dilation = c.d;
        spec.groups = c.g;
        spec.direction = c.dir;
        worst = std::max(
            worst, grad_check(
                       [&] {
                           return sum(gelu(dilated_conv(x, spec, w, b)));
                       },
                       {x, w, b}));
    }
    // weight norm, all three axes
    {
        Tensor v = randn({4, 2, 3}, rng);
        Tensor g = randn({4}, rng);
        worst = std::max(
            worst,
            grad_check(
                [&] {
                    return sum(weight_norm(v, g, WeightNormAxis::per_row));
                },
                {v, g}));
    }
    {
        Tensor v = randn({3, 4}, rng);
        Tensor g = randn({4}, rng);
        worst = std::max(
            worst,
            grad_check(
                [&] {
                    return sum(
                        weight_norm(v, g, WeightNormAxis::per_column));
                },
                {v, g}));
    }
    {
        Tensor v = randn({5}, rng);
        Tensor g = randn({1}, rng);
        worst = std::max(
            worst, grad_check(
                       [&] {
                           return sum(weight_norm(v, g,
                                                  WeightNormAxis::whole));
                       },
                       {v, g}));
    }
    // embedding + slices + concat + scalar ops
    {
        Tensor table = randn({3, 2}, rng);
        const IndexTensor ids = IndexTensor::of({4, 1}, {0, 2, 1, 0});
        Tensor other = randn({4, 1, 2}, rng);
        worst = std::max(
            worst,
            grad_check(
                [&] {
                    Tensor e = embedding_lookup(ids, table);
                    Tensor c = concat_channels({e, other});
                    Tensor s = slice_time(c, 1, 2);
                    Tensor ch = slice_channels(s, 1, 2);
                    return sum(mul_scalar(add_scalar(ch, 0.5), 2.0));
                },
                {table, other}));
    }
    // dropout with a fixed mask (rng reseeded per evaluation)
    {
        Tensor x = randn({50}, rng);
        worst = std::max(worst, grad_check(
                                    [&] {
                                        Rng mask_rng(99);
                                        return sum(
                                            dropout(x, 0.3, true, &mask_rng));
                                    },
                                    {x}));
    }

    CHECK(worst < 1e-4);
    MESSAGE("max relative gradient error: ", worst);
}

TEST_CASE("diamond graphs accumulate through both paths") {
    Tensor x = Tensor::of({2}, {1.0, 2.0}, true);
    // loss = sum(x*x + 3x) -> d/dx = 2x + 3
    const Tensor loss = sum(add(mul(x, x), mul_scalar(x, 3.0)));
    backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(5.0));
    CHECK(x.grad()[1] == doctest::Approx(7.0));
}

TEST_CASE("text dump round-trips values exactly") {
    Rng rng(5);
    const Tensor x = randn({2, 3}, rng, false);
    const std::string text = to_text(x);
    const Tensor back = from_text(text);
    REQUIRE(back.shape() == x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(back.values()[i] == x.values()[i]);
    CHECK_THROWS_AS(from_text("not a tensor"), DataError);
}

TEST_CASE("all_finite flags NaN and Inf") {
    Tensor ok = Tensor::of({2}, {1.0, 2.0});
    CHECK(all_finite(ok));
    Tensor bad = Tensor::of({2}, {1.0, std::nan("")});
    CHECK_FALSE(all_finite(bad));
}
