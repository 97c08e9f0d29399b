#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "bitcn/data.hpp"
#include "bitcn/model.hpp"
#include "bitcn/training.hpp"

namespace bitcn {

// The nine report quantile levels 0.1 .. 0.9.
inline constexpr std::array<double, 9> kQuantileLevels = {
    0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

// Decoded forecast for one window, in the original target space.
struct ForecastResult {
    WindowRef ref;
    std::vector<double> actual; // horizon values
    std::vector<double> median;
    std::array<std::vector<double>, 9> quantiles; // per level, per step
};

// analytic: one forward pass per horizon step, feeding the previous step's
// median back into the lag channel and mapping quantiles through the
// location-scale family. monte_carlo: S sampled paths per window, feeding
// sampled values back; quantiles are per-step order statistics, which makes
// them nondecreasing in p by construction.
struct DecodeMode {
    enum class Kind { analytic, monte_carlo } kind = Kind::monte_carlo;
    std::size_t samples = 100;

    static DecodeMode analytic() { return {Kind::analytic, 0}; }
    static DecodeMode monte_carlo(std::size_t s) {
        return {Kind::monte_carlo, s};
    }
};

// Decodes every window in one batched pass per horizon step. Monte Carlo
// paths draw from per-window streams derived from (seed, series id, window
// start, path), so results do not depend on how windows are grouped.
std::vector<ForecastResult>
decode_forecasts(const BiTCNModel& model, const WindowDataset& data,
                 const std::vector<WindowRef>& refs, const DecodeMode& mode,
                 std::uint64_t seed);

ForecastResult decode_forecast(const BiTCNModel& model,
                               const WindowDataset& data,
                               const WindowRef& ref, const DecodeMode& mode,
                               std::uint64_t seed);

// (1/n) sum 2|y - f| / (|y| + |f|), a 0/0 step contributing 0. Range [0, 2].
double smape(const std::vector<double>& actual,
             const std::vector<double>& forecast);

// RMSE over the horizon divided by the mean absolute actual; an all-zero
// horizon divides by 1 instead. literal_sum divides by the summed absolute
// actuals rather than their mean.
double nrmse(const std::vector<double>& actual,
             const std::vector<double>& forecast, bool literal_sum = false);

// Pooled quantile loss: sum 2|(y - f)(1{y <= f} - p)| normalized by sum y.
// A nonpositive denominator flags the result as unnormalized instead of
// failing.
struct QuantileLossResult {
    double value = 0.0;
    bool unnormalized = false;
};
QuantileLossResult quantile_loss(const std::vector<double>& actual,
                                 const std::vector<double>& forecast_q,
                                 double p);

double mean_quantile(const std::array<double, 9>& q);

// forecast_t = history[end - period + (t mod period)].
std::vector<double> seasonal_naive(const std::vector<double>& history,
                                   std::size_t period, std::size_t horizon);
// Same rule packaged as a ForecastResult (all quantiles equal the point
// forecast). period must be at most the conditioning length.
ForecastResult seasonal_naive_forecast(const WindowDataset& data,
                                       const WindowRef& ref,
                                       std::size_t period);

// sMAPE and NRMSE average per-window values; quantile losses pool numerator
// and denominator across every window and step.
struct SplitMetrics {
    double smape = 0.0;
    double nrmse = 0.0;
    std::array<double, 9> q{};
    double mq = 0.0;
    bool q_unnormalized = false;
};

SplitMetrics compute_metrics(const std::vector<ForecastResult>& results,
                             bool literal_sum_nrmse = false);

// Aggregated report: one SplitMetrics per seed plus their mean and sample
// standard deviation, the model parameter count, and the exact run
// configuration. Serializes to line-oriented key/value text and parses back.
struct MetricsReport {
    int schema = 1;
    std::size_t parameter_count = 0;
    bool partial = false; // some requested seed is missing
    std::vector<std::uint64_t> seeds;
    std::vector<SplitMetrics> per_seed;
    SplitMetrics mean, stddev;
    std::string config_echo;

    void finalize(); // recompute mean/stddev from per_seed
    std::string to_text() const;
    static MetricsReport from_text(const std::string& text);
};

void emit_report(const MetricsReport& report, const std::string& path);

// Plot data: one row per window and step with actual, median, and the
// 10%/90% band, in the original target space.
void write_plot_csv(const WindowDataset& data,
                    const std::vector<ForecastResult>& results,
                    const std::string& path);

// Training curves: one row per seed and epoch.
void write_curves_csv(const std::vector<RunRecord>& records,
                      const std::string& path);

} // namespace bitcn
