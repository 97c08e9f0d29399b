#include "bitcn/distributions.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "bitcn/errors.hpp"

namespace bitcn {

Family parse_family(const std::string& name) {
    if (name == "student_t3" || name == "t3") return Family::student_t3;
    if (name == "gaussian" || name == "normal") return Family::gaussian;
    throw ConfigError("unknown distribution family '" + name + "'");
}

std::string family_name(Family f) {
    return f == Family::student_t3 ? "student_t3" : "gaussian";
}

} // namespace bitcn

namespace bitcn::dist {

namespace {

constexpr double kPi = std::numbers::pi;
const double kSqrt3 = std::sqrt(3.0);
// -log f(0) for the standard t3: log(pi sqrt(3) / 2).
const double kT3NormConst = std::log(kPi * kSqrt3 / 2.0);
const double kHalfLog2Pi = 0.5 * std::log(2.0 * kPi);

} // namespace

double t3_pdf(double y) {
    const double q = 1.0 + y * y / 3.0;
    return 2.0 / (kPi * kSqrt3 * q * q);
}

double t3_log_pdf(double y) {
    return -kT3NormConst - 2.0 * std::log1p(y * y / 3.0);
}

double t3_cdf(double y) {
    const double s = y / kSqrt3;
    return 0.5 + (s / (1.0 + s * s) + std::atan(s)) / kPi;
}

double gaussian_pdf(double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi);
}

double gaussian_cdf(double z) {
    return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

double quantile(Family f, double p) {
    if (!(p > 0.0 && p < 1.0))
        throw NumericError("quantile: p must lie strictly inside (0, 1)");
    const auto cdf = [f](double y) {
        return f == Family::student_t3 ? t3_cdf(y) : gaussian_cdf(y);
    };
    double lo = -1.0, hi = 1.0;
    while (cdf(lo) > p) lo *= 2.0;
    while (cdf(hi) < p) hi *= 2.0;
    // Bisection: ~60 halvings shrink any initial bracket below 1e-10.
    for (int it = 0; it < 400 && hi - lo > 1e-10; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (cdf(mid) < p)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

double quantile(Family f, double p, double mu, double sigma) {
    if (!(sigma > 0.0)) throw NumericError("quantile: sigma must be positive");
    return mu + sigma * quantile(f, p);
}

double sample(Family f, Rng& rng, double mu, double sigma) {
    double u = rng.uniform();
    if (u < 1e-16) u = 1e-16; // keep the quantile argument inside (0, 1)
    return quantile(f, u, mu, sigma);
}

namespace {

void check_nll_args(const Tensor& y, const Tensor& mu, const Tensor& sigma,
                    const char* op) {
    if (!y.defined() || !mu.defined() || !sigma.defined())
        throw ShapeError(std::string(op) + ": undefined input");
    if (y.shape() != mu.shape() || y.shape() != sigma.shape())
        throw ShapeError(std::string(op) + ": y, mu, sigma shapes must match");
    for (double s : sigma.values())
        if (!(s > 0.0))
            throw NumericError(std::string(op) +
                               ": sigma must be strictly positive");
}

} // namespace

Tensor t3_nll(const Tensor& y, const Tensor& mu, const Tensor& sigma) {
    check_nll_args(y, mu, sigma, "t3_nll");
    const auto& yv = y.values();
    const auto& mv = mu.values();
    const auto& sv = sigma.values();
    const std::size_t n = yv.size();

    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = (yv[i] - mv[i]) / sv[i];
        acc += 2.0 * std::log1p(z * z / 3.0) + kT3NormConst + std::log(sv[i]);
    }

    return detail::make_op(
        "t3_nll", {1}, {acc / static_cast<double>(n)}, {y, mu, sigma},
        [y, mu, sigma, n](const std::vector<double>& dy) {
            const double g0 = dy[0] / static_cast<double>(n);
            const auto& yv = y.values();
            const auto& mv = mu.values();
            const auto& sv = sigma.values();
            // d/dz 2log(1+z^2/3) = (4z/3)/(1+z^2/3); bounded as |z| grows.
            if (mu.requires_grad()) {
                std::vector<double> dm(n);
                for (std::size_t i = 0; i < n; ++i) {
                    const double z = (yv[i] - mv[i]) / sv[i];
                    const double dldz = (4.0 * z / 3.0) / (1.0 + z * z / 3.0);
                    dm[i] = g0 * (-dldz / sv[i]);
                }
                detail::accumulate(mu, dm.data(), n);
            }
            if (sigma.requires_grad()) {
                std::vector<double> ds(n);
                for (std::size_t i = 0; i < n; ++i) {
                    const double z = (yv[i] - mv[i]) / sv[i];
                    const double dldz = (4.0 * z / 3.0) / (1.0 + z * z / 3.0);
                    ds[i] = g0 * ((1.0 - dldz * z) / sv[i]);
                }
                detail::accumulate(sigma, ds.data(), n);
            }
        });
}

Tensor gaussian_nll(const Tensor& y, const Tensor& mu, const Tensor& sigma) {
    check_nll_args(y, mu, sigma, "gaussian_nll");
    const auto& yv = y.values();
    const auto& mv = mu.values();
    const auto& sv = sigma.values();
    const std::size_t n = yv.size();

    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = (yv[i] - mv[i]) / sv[i];
        acc += 0.5 * z * z + std::log(sv[i]) + kHalfLog2Pi;
    }

    return detail::make_op(
        "gaussian_nll", {1}, {acc / static_cast<double>(n)}, {y, mu, sigma},
        [y, mu, sigma, n](const std::vector<double>& dy) {
            const double g0 = dy[0] / static_cast<double>(n);
            const auto& yv = y.values();
            const auto& mv = mu.values();
            const auto& sv = sigma.values();
            if (mu.requires_grad()) {
                std::vector<double> dm(n);
                for (std::size_t i = 0; i < n; ++i) {
                    const double z = (yv[i] - mv[i]) / sv[i];
                    dm[i] = g0 * (-z / sv[i]);
                }
                detail::accumulate(mu, dm.data(), n);
            }
            if (sigma.requires_grad()) {
                std::vector<double> ds(n);
                for (std::size_t i = 0; i < n; ++i) {
                    const double z = (yv[i] - mv[i]) / sv[i];
                    ds[i] = g0 * ((1.0 - z * z) / sv[i]);
                }
                detail::accumulate(sigma, ds.data(), n);
            }
        });
}

Tensor nll(Family f, const Tensor& y, const Tensor& mu, const Tensor& sigma) {
    return f == Family::student_t3 ? t3_nll(y, mu, sigma)
                                   : gaussian_nll(y, mu, sigma);
}

} // namespace bitcn::dist
