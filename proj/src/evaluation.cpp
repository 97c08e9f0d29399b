#include "bitcn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "bitcn/distributions.hpp"
#include "bitcn/errors.hpp"

namespace bitcn {

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void check_pair(const std::vector<double>& a, const std::vector<double>& f,
                const char* op) {
    if (a.empty()) throw ShapeError(std::string(op) + ": empty series");
    if (a.size() != f.size())
        throw ShapeError(std::string(op) + ": length mismatch");
}

// Zeroes the lag entries past the conditioning range so decoding cannot see
// the actual future, then returns the write stride. Lag layout is (T, b, 1).
std::size_t blank_future_lags(Tensor& y_lag, std::size_t t0,
                              std::size_t batch) {
    std::vector<double>& lv = y_lag.values_mut();
    const std::size_t T = y_lag.dim(0);
    for (std::size_t t = t0 + 1; t < T; ++t)
        for (std::size_t w = 0; w < batch; ++w) lv[t * batch + w] = 0.0;
    return batch;
}

} // namespace

// ---- decoding ----

std::vector<ForecastResult>
decode_forecasts(const BiTCNModel& model, const WindowDataset& data,
                 const std::vector<WindowRef>& refs, const DecodeMode& mode,
                 std::uint64_t seed) {
    if (refs.empty()) throw DataError("decode_forecasts: no windows");
    const DatasetConfig& dc = data.config();
    const std::size_t t0 = dc.t0, h = dc.horizon, T = dc.window_length();
    const std::size_t nw = refs.size();
    NoGradGuard guard;

    std::vector<ForecastResult> out(nw);
    for (std::size_t w = 0; w < nw; ++w) {
        out[w].ref = refs[w];
        out[w].actual = data.horizon_actuals(refs[w]);
    }

    if (mode.kind == DecodeMode::Kind::analytic) {
        WindowBatch batch = data.make_batch(refs);
        Tensor lag = batch.y_lag;
        const std::size_t stride = blank_future_lags(lag, t0, nw);
        std::vector<double> mus(h * nw), sigmas(h * nw);
        for (std::size_t s = 0; s < h; ++s) {
            const std::size_t t = t0 + s;
            const auto fwd =
                model.forward(lag, batch.a_cov, batch.a_cat, false, nullptr);
            const auto& mv = fwd.mu.values();
            const auto& sv = fwd.sigma.values();
            std::vector<double>& lv = lag.values_mut();
            for (std::size_t w = 0; w < nw; ++w) {
                const double mu = mv[t * stride + w];
                mus[s * nw + w] = mu;
                sigmas[s * nw + w] = sv[t * stride + w];
                // both families are symmetric: the median equals mu
                if (t + 1 < T) lv[(t + 1) * stride + w] = mu;
            }
        }
        const Family fam = model.hyper().distribution;
        std::array<double, 9> z{};
        for (std::size_t k = 0; k < 9; ++k)
            z[k] = dist::quantile(fam, kQuantileLevels[k]);
        for (std::size_t w = 0; w < nw; ++w) {
            out[w].median.resize(h);
            for (auto& q : out[w].quantiles) q.resize(h);
            for (std::size_t s = 0; s < h; ++s) {
                const double mu = mus[s * nw + w];
                const double sg = sigmas[s * nw + w];
                out[w].median[s] = data.to_original_space(mu, refs[w]);
                for (std::size_t k = 0; k < 9; ++k)
                    out[w].quantiles[k][s] =
                        data.to_original_space(mu + sg * z[k], refs[w]);
            }
        }
        return out;
    }

    // Monte Carlo: one batch column per (window, path).
    const std::size_t S = mode.samples;
    if (S < 10)
        throw ConfigError("monte_carlo decoding needs at least 10 samples");
    std::vector<WindowRef> rep(nw * S);
    for (std::size_t w = 0; w < nw; ++w)
        for (std::size_t s = 0; s < S; ++s) rep[w * S + s] = refs[w];
    WindowBatch batch = data.make_batch(rep);
    Tensor lag = batch.y_lag;
    const std::size_t stride = blank_future_lags(lag, t0, rep.size());

    std::vector<Rng> streams;
    streams.reserve(rep.size());
    for (std::size_t w = 0; w < nw; ++w) {
        const std::string& id = data.table().series[refs[w].series].id;
        for (std::size_t s = 0; s < S; ++s)
            streams.emplace_back(Rng::derive(seed, id, refs[w].start, s));
    }

    const Family fam = model.hyper().distribution;
    std::vector<double> draws(h * rep.size());
    for (std::size_t step = 0; step < h; ++step) {
        const std::size_t t = t0 + step;
        const auto fwd =
            model.forward(lag, batch.a_cov, batch.a_cat, false, nullptr);
        const auto& mv = fwd.mu.values();
        const auto& sv = fwd.sigma.values();
        std::vector<double>& lv = lag.values_mut();
        for (std::size_t c = 0; c < rep.size(); ++c) {
            const double d = dist::sample(fam, streams[c], mv[t * stride + c],
                                          sv[t * stride + c]);
            draws[step * rep.size() + c] = d;
            if (t + 1 < T) lv[(t + 1) * stride + c] = d;
        }
    }

    // Per-step order statistics; index ceil(p S) - 1 of the sorted paths.
    std::vector<double> col(S);
    for (std::size_t w = 0; w < nw; ++w) {
        out[w].median.resize(h);
        for (auto& q : out[w].quantiles) q.resize(h);
        for (std::size_t step = 0; step < h; ++step) {
            for (std::size_t s = 0; s < S; ++s)
                col[s] = draws[step * rep.size() + w * S + s];
            std::sort(col.begin(), col.end());
            for (std::size_t k = 0; k < 9; ++k) {
                const double rank = std::ceil(kQuantileLevels[k] *
                                              static_cast<double>(S));
                const std::size_t idx = std::min(
                    S - 1, static_cast<std::size_t>(std::max(1.0, rank)) - 1);
                out[w].quantiles[k][step] =
                    data.to_original_space(col[idx], refs[w]);
            }
            out[w].median[step] = out[w].quantiles[4][step];
        }
    }
    return out;
}

ForecastResult decode_forecast(const BiTCNModel& model,
                               const WindowDataset& data,
                               const WindowRef& ref, const DecodeMode& mode,
                               std::uint64_t seed) {
    return decode_forecasts(model, data, {ref}, mode, seed).front();
}

// ---- metrics ----

double smape(const std::vector<double>& actual,
             const std::vector<double>& forecast) {
    check_pair(actual, forecast, "smape");
    double s = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        const double den = std::fabs(actual[i]) + std::fabs(forecast[i]);
        if (den > 0.0) s += 2.0 * std::fabs(actual[i] - forecast[i]) / den;
    }
    return s / static_cast<double>(actual.size());
}

double nrmse(const std::vector<double>& actual,
             const std::vector<double>& forecast, bool literal_sum) {
    check_pair(actual, forecast, "nrmse");
    double se = 0.0, abs_sum = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        const double d = actual[i] - forecast[i];
        se += d * d;
        abs_sum += std::fabs(actual[i]);
    }
    const double n = static_cast<double>(actual.size());
    const double rmse = std::sqrt(se / n);
    double den = literal_sum ? abs_sum : abs_sum / n;
    if (den == 0.0) den = 1.0;
    return rmse / den;
}

QuantileLossResult quantile_loss(const std::vector<double>& actual,
                                 const std::vector<double>& forecast_q,
                                 double p) {
    if (!(p > 0.0 && p < 1.0))
        throw ConfigError("quantile level must lie in (0, 1)");
    check_pair(actual, forecast_q, "quantile_loss");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        const double ind = actual[i] <= forecast_q[i] ? 1.0 : 0.0;
        num += 2.0 * std::fabs((actual[i] - forecast_q[i]) * (ind - p));
        den += actual[i];
    }
    if (den <= 0.0) return {num, true};
    return {num / den, false};
}

double mean_quantile(const std::array<double, 9>& q) {
    double s = 0.0;
    for (double v : q) s += v;
    return s / 9.0;
}

std::vector<double> seasonal_naive(const std::vector<double>& history,
                                   std::size_t period, std::size_t horizon) {
    if (period == 0) throw ConfigError("seasonal_naive: period must be > 0");
    if (history.size() < period)
        throw DataError("seasonal_naive: history shorter than one period");
    std::vector<double> out(horizon);
    const std::size_t base = history.size() - period;
    for (std::size_t t = 0; t < horizon; ++t)
        out[t] = history[base + t % period];
    return out;
}

ForecastResult seasonal_naive_forecast(const WindowDataset& data,
                                       const WindowRef& ref,
                                       std::size_t period) {
    ForecastResult r;
    r.ref = ref;
    r.actual = data.horizon_actuals(ref);
    r.median = seasonal_naive(data.history_tail(ref, period), period,
                              data.config().horizon);
    for (auto& q : r.quantiles) q = r.median;
    return r;
}

SplitMetrics compute_metrics(const std::vector<ForecastResult>& results,
                             bool literal_sum_nrmse) {
    if (results.empty()) throw DataError("compute_metrics: no forecasts");
    SplitMetrics m;
    std::vector<double> all_actual;
    for (const auto& r : results) {
        m.smape += smape(r.actual, r.median);
        m.nrmse += nrmse(r.actual, r.median, literal_sum_nrmse);
        all_actual.insert(all_actual.end(), r.actual.begin(),
                          r.actual.end());
    }
    m.smape /= static_cast<double>(results.size());
    m.nrmse /= static_cast<double>(results.size());

    std::vector<double> all_q;
    all_q.reserve(all_actual.size());
    for (std::size_t k = 0; k < 9; ++k) {
        all_q.clear();
        for (const auto& r : results)
            all_q.insert(all_q.end(), r.quantiles[k].begin(),
                         r.quantiles[k].end());
        const QuantileLossResult ql =
            quantile_loss(all_actual, all_q, kQuantileLevels[k]);
        m.q[k] = ql.value;
        if (ql.unnormalized) m.q_unnormalized = true;
    }
    m.mq = mean_quantile(m.q);
    return m;
}

// ---- reports ----

namespace {

const char* kQKeys[9] = {"q10", "q20", "q30", "q40", "q50",
                         "q60", "q70", "q80", "q90"};

std::string metrics_line(const char* label, const SplitMetrics& m) {
    std::string out = label;
    out += " smape " + fmt17(m.smape) + " nrmse " + fmt17(m.nrmse);
    for (std::size_t k = 0; k < 9; ++k)
        out += std::string(" ") + kQKeys[k] + " " + fmt17(m.q[k]);
    out += " mq " + fmt17(m.mq);
    out += " q_unnormalized " + std::string(m.q_unnormalized ? "1" : "0");
    return out;
}

SplitMetrics parse_metrics_fields(std::istringstream& in,
                                  const std::string& line) {
    SplitMetrics m;
    std::string key;
    bool saw_smape = false, saw_mq = false;
    while (in >> key) {
        if (key == "smape") {
            in >> m.smape;
            saw_smape = true;
        } else if (key == "nrmse") {
            in >> m.nrmse;
        } else if (key == "mq") {
            in >> m.mq;
            saw_mq = true;
        } else if (key == "q_unnormalized") {
            int f = 0;
            in >> f;
            m.q_unnormalized = f != 0;
        } else {
            bool matched = false;
            for (std::size_t k = 0; k < 9; ++k) {
                if (key == kQKeys[k]) {
                    in >> m.q[k];
                    matched = true;
                    break;
                }
            }
            if (!matched)
                throw DataError("metrics report: unknown field '" + key +
                                "' in line: " + line);
        }
        if (!in && !in.eof())
            throw DataError("metrics report: malformed line: " + line);
    }
    if (!saw_smape || !saw_mq)
        throw DataError("metrics report: incomplete line: " + line);
    return m;
}

} // namespace

void MetricsReport::finalize() {
    mean = SplitMetrics{};
    stddev = SplitMetrics{};
    const std::size_t n = per_seed.size();
    if (n == 0) return;
    for (const auto& m : per_seed) {
        mean.smape += m.smape;
        mean.nrmse += m.nrmse;
        for (std::size_t k = 0; k < 9; ++k) mean.q[k] += m.q[k];
        mean.mq += m.mq;
        if (m.q_unnormalized) mean.q_unnormalized = true;
    }
    const double dn = static_cast<double>(n);
    mean.smape /= dn;
    mean.nrmse /= dn;
    for (std::size_t k = 0; k < 9; ++k) mean.q[k] /= dn;
    mean.mq /= dn;
    if (n > 1) {
        for (const auto& m : per_seed) {
            auto acc = [](double& dst, double v, double mu) {
                dst += (v - mu) * (v - mu);
            };
            acc(stddev.smape, m.smape, mean.smape);
            acc(stddev.nrmse, m.nrmse, mean.nrmse);
            for (std::size_t k = 0; k < 9; ++k)
                acc(stddev.q[k], m.q[k], mean.q[k]);
            acc(stddev.mq, m.mq, mean.mq);
        }
        const double dof = dn - 1.0;
        stddev.smape = std::sqrt(stddev.smape / dof);
        stddev.nrmse = std::sqrt(stddev.nrmse / dof);
        for (std::size_t k = 0; k < 9; ++k)
            stddev.q[k] = std::sqrt(stddev.q[k] / dof);
        stddev.mq = std::sqrt(stddev.mq / dof);
    }
    stddev.q_unnormalized = mean.q_unnormalized;
}

std::string MetricsReport::to_text() const {
    std::string out;
    out += "metrics_schema " + std::to_string(schema) + "\n";
    out += "parameter_count " + std::to_string(parameter_count) + "\n";
    out += "partial " + std::string(partial ? "1" : "0") + "\n";
    for (std::size_t i = 0; i < per_seed.size(); ++i) {
        const std::string label =
            "seed " + std::to_string(i < seeds.size() ? seeds[i] : 0);
        out += metrics_line(label.c_str(), per_seed[i]) + "\n";
    }
    out += metrics_line("mean", mean) + "\n";
    out += metrics_line("std", stddev) + "\n";
    std::istringstream cfg(config_echo);
    std::string line;
    while (std::getline(cfg, line)) out += "config | " + line + "\n";
    return out;
}

MetricsReport MetricsReport::from_text(const std::string& text) {
    MetricsReport r;
    r.schema = 0;
    std::istringstream in(text);
    std::string line;
    bool saw_mean = false, saw_std = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "metrics_schema") {
            ls >> r.schema;
        } else if (key == "parameter_count") {
            ls >> r.parameter_count;
        } else if (key == "partial") {
            int f = 0;
            ls >> f;
            r.partial = f != 0;
        } else if (key == "seed") {
            std::uint64_t s = 0;
            ls >> s;
            r.seeds.push_back(s);
            r.per_seed.push_back(parse_metrics_fields(ls, line));
        } else if (key == "mean") {
            r.mean = parse_metrics_fields(ls, line);
            saw_mean = true;
        } else if (key == "std") {
            r.stddev = parse_metrics_fields(ls, line);
            saw_std = true;
        } else if (key == "config") {
            std::string rest;
            std::getline(ls, rest);
            // strip " | " after the key
            const std::string prefix = " | ";
            if (rest.rfind(prefix, 0) != 0)
                throw DataError("metrics report: malformed config line: " +
                                line);
            r.config_echo += rest.substr(prefix.size()) + "\n";
        } else {
            throw DataError("metrics report: unknown line: " + line);
        }
        if (!ls && !ls.eof())
            throw DataError("metrics report: malformed line: " + line);
    }
    if (r.schema != 1)
        throw DataError("metrics report: unsupported schema " +
                        std::to_string(r.schema));
    if (!saw_mean || !saw_std)
        throw DataError("metrics report: missing mean/std lines");
    return r;
}

void emit_report(const MetricsReport& report, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    f << report.to_text();
    if (!f) throw DataError("failed writing report '" + path + "'");
}

void write_plot_csv(const WindowDataset& data,
                    const std::vector<ForecastResult>& results,
                    const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    f << "series,start,step,actual,median,q10,q90\n";
    for (const auto& r : results) {
        const std::string& id = data.table().series.at(r.ref.series).id;
        for (std::size_t t = 0; t < r.median.size(); ++t) {
            f << id << ',' << r.ref.start << ',' << t << ','
              << fmt17(r.actual[t]) << ',' << fmt17(r.median[t]) << ','
              << fmt17(r.quantiles[0][t]) << ',' << fmt17(r.quantiles[8][t])
              << '\n';
        }
    }
    if (!f) throw DataError("failed writing plot data '" + path + "'");
}

void write_curves_csv(const std::vector<RunRecord>& records,
                      const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    f << "seed,epoch,train_nll,val_nll,seconds\n";
    for (const auto& r : records)
        for (const auto& e : r.epochs) {
            char sec[32];
            std::snprintf(sec, sizeof sec, "%.3f", e.seconds);
            f << r.seed << ',' << e.epoch << ',' << fmt17(e.train_nll) << ','
              << fmt17(e.val_nll) << ',' << sec << '\n';
        }
    if (!f) throw DataError("failed writing curves '" + path + "'");
}

} // namespace bitcn
