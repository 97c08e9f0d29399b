#include "bitcn/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "bitcn/distributions.hpp"

namespace bitcn {

// ---- calendar ----

std::int64_t freq_step_seconds(Frequency f) {
    return f == Frequency::hourly ? 3600 : 86400;
}

Frequency parse_frequency(const std::string& s) {
    if (s == "hourly" || s == "hour") return Frequency::hourly;
    if (s == "daily" || s == "day") return Frequency::daily;
    throw ConfigError("unknown frequency '" + s + "'");
}

std::string frequency_name(Frequency f) {
    return f == Frequency::hourly ? "hourly" : "daily";
}

namespace {

std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy =
        static_cast<unsigned>((153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1);
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yy + (m <= 2));
}

bool is_leap(int y) {
    return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
}

int days_in_month(int y, int m) {
    static const int base[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    return m == 2 && is_leap(y) ? 29 : base[m - 1];
}

bool all_digits(const std::string& s, std::size_t from, std::size_t to) {
    for (std::size_t i = from; i < to; ++i)
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    return true;
}

} // namespace

CalendarParts calendar_parts(std::int64_t epoch_seconds) {
    std::int64_t days = epoch_seconds / 86400;
    std::int64_t rem = epoch_seconds % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    CalendarParts p;
    civil_from_days(days, p.year, p.month, p.day);
    p.hour = static_cast<int>(rem / 3600);
    p.day_of_week = static_cast<int>(((days % 7) + 11) % 7); // 0 = Sunday
    p.day_of_year = static_cast<int>(days - days_from_civil(p.year, 1, 1) + 1);
    return p;
}

std::int64_t parse_timestamp(const std::string& text) {
    auto bad = [&text]() -> std::int64_t {
        throw DataError("malformed timestamp '" + text + "'");
    };
    const std::size_t n = text.size();
    if (n != 10 && n != 16 && n != 19) return bad();
    if (!all_digits(text, 0, 4) || text[4] != '-' || !all_digits(text, 5, 7) ||
        text[7] != '-' || !all_digits(text, 8, 10))
        return bad();
    const int y = std::stoi(text.substr(0, 4));
    const int mo = std::stoi(text.substr(5, 2));
    const int d = std::stoi(text.substr(8, 2));
    int h = 0, mi = 0, se = 0;
    if (n > 10) {
        if ((text[10] != 'T' && text[10] != ' ') || !all_digits(text, 11, 13) ||
            text[13] != ':' || !all_digits(text, 14, 16))
            return bad();
        h = std::stoi(text.substr(11, 2));
        mi = std::stoi(text.substr(14, 2));
        if (n == 19) {
            if (text[16] != ':' || !all_digits(text, 17, 19)) return bad();
            se = std::stoi(text.substr(17, 2));
        }
    }
    if (mo < 1 || mo > 12 || d < 1 || d > days_in_month(y, mo) || h > 23 ||
        mi > 59 || se > 59)
        return bad();
    return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + se;
}

std::string format_timestamp(std::int64_t epoch_seconds) {
    const CalendarParts p = calendar_parts(epoch_seconds);
    const int mi = static_cast<int>((epoch_seconds % 3600 + 3600) % 3600) / 60;
    const int se = static_cast<int>((epoch_seconds % 60 + 60) % 60);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d", p.year,
                  p.month, p.day, p.hour, mi, se);
    return buf;
}

// ---- features and scaling ----

std::pair<double, double> fourier_features(double value, double period) {
    const double a = value * (2.0 * std::numbers::pi / period);
    return {std::sin(a), std::cos(a)};
}

double mean_scale(const double* history, std::size_t n) {
    if (n == 0) throw DataError("mean_scale: empty history");
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += history[i];
    const double scale = 1.0 + s / static_cast<double>(n);
    if (!(scale > 0.0) || !std::isfinite(scale))
        throw DataError("mean_scale: history mean " +
                        std::to_string(s / static_cast<double>(n)) +
                        " yields nonpositive scale");
    return scale;
}

const std::vector<double>*
SeriesTable::Series::covariate(const std::string& name) const {
    for (const auto& [n, v] : covariates)
        if (n == name) return &v;
    return nullptr;
}

// ---- dataset config ----

void DatasetConfig::validate() const {
    if (t0 == 0) throw ConfigError("t0 must be positive");
    if (horizon == 0) throw ConfigError("horizon must be positive");
    if (cov_length < t0 + horizon)
        throw ConfigError("cov_length must be at least t0 + horizon");
    if (stride == 0) throw ConfigError("stride must be positive");
    if (!(train_frac > 0.0) || !(val_frac >= 0.0) ||
        train_frac + val_frac >= 1.0)
        throw ConfigError("split fractions must satisfy 0 < train, "
                          "0 <= val, train + val < 1");
    if (series_embedding && embedding_dim == 0)
        throw ConfigError("embedding_dim must be positive");
    if (sample_cap == 0) throw ConfigError("sample_cap must be positive");
    for (const auto& f : fourier) {
        if (!(f.period > 0.0))
            throw ConfigError("fourier period must be positive");
        if (f.field != "hour_of_day" && f.field != "day_of_week" &&
            f.field != "day_of_month" && f.field != "month" &&
            f.field != "day_of_year")
            throw ConfigError("unknown fourier field '" + f.field + "'");
    }
}

namespace {

double calendar_field(const CalendarParts& p, const std::string& field) {
    if (field == "hour_of_day") return p.hour;
    if (field == "day_of_week") return p.day_of_week;
    if (field == "day_of_month") return p.day;
    if (field == "month") return p.month;
    return p.day_of_year;
}

} // namespace

// ---- window dataset ----

WindowDataset::WindowDataset(SeriesTable table, DatasetConfig cfg)
    : table_(std::move(table)), cfg_(std::move(cfg)) {
    cfg_.validate();
    if (table_.series.empty()) throw DataError("dataset has no series");

    transformed_.reserve(table_.series.size());
    for (const auto& s : table_.series) {
        std::vector<double> t = s.target;
        if (cfg_.log_transform) {
            for (double& v : t) {
                if (v <= -1.0)
                    throw DataError("series '" + s.id +
                                    "': log transform needs values > -1");
                v = std::log1p(v);
            }
        }
        for (const auto& col : cfg_.covariate_columns)
            if (!s.covariate(col))
                throw DataError("series '" + s.id +
                                "' is missing covariate column '" + col +
                                "'");
        transformed_.push_back(std::move(t));
    }
    enumerate_windows();
}

void WindowDataset::enumerate_windows() {
    const std::int64_t step = freq_step_seconds(table_.freq);
    const std::size_t T = cfg_.window_length();
    const std::size_t need =
        cfg_.covariate_columns.empty() ? T : cfg_.cov_length;

    // Stride-1 candidates per series; splits are assigned on these and the
    // per-split strides are applied afterwards.
    std::vector<std::vector<std::size_t>> candidates(table_.series.size());
    std::int64_t min_fs = 0, max_fs = 0;
    bool any = false;
    for (std::size_t si = 0; si < table_.series.size(); ++si) {
        const auto& s = table_.series[si];
        if (s.target.size() < need) {
            ++skipped_series_;
            table_.warnings.push_back("series '" + s.id +
                                      "' is too short for a single window; "
                                      "skipped");
            continue;
        }
        for (std::size_t start = 0; start + need <= s.target.size();
             ++start) {
            candidates[si].push_back(start);
            const std::int64_t fs =
                s.start_epoch +
                static_cast<std::int64_t>(start + cfg_.t0) * step;
            if (!any || fs < min_fs) min_fs = fs;
            if (!any || fs > max_fs) max_fs = fs;
            any = true;
        }
    }
    if (!any) throw DataError("no series is long enough for a single window");

    const double span = static_cast<double>(max_fs - min_fs + step);
    train_end_epoch_ =
        min_fs + static_cast<std::int64_t>(cfg_.train_frac * span);
    val_end_epoch_ =
        min_fs +
        static_cast<std::int64_t>((cfg_.train_frac + cfg_.val_frac) * span);

    const std::size_t es = cfg_.eval_stride ? cfg_.eval_stride : cfg_.horizon;
    for (std::size_t si = 0; si < table_.series.size(); ++si) {
        std::vector<std::size_t> tr, va, te;
        for (std::size_t start : candidates[si]) {
            const std::int64_t fs =
                table_.series[si].start_epoch +
                static_cast<std::int64_t>(start + cfg_.t0) * step;
            if (fs < train_end_epoch_)
                tr.push_back(start);
            else if (fs < val_end_epoch_)
                va.push_back(start);
            else
                te.push_back(start);
        }
        for (std::size_t i = 0; i < tr.size(); i += cfg_.stride)
            train_.push_back({si, tr[i]});
        for (std::size_t i = 0; i < va.size(); i += es)
            val_.push_back({si, va[i]});
        for (std::size_t i = 0; i < te.size(); i += es)
            test_.push_back({si, te[i]});
    }

    // Vocabulary: only series observed in the training range.
    vocab_index_.assign(table_.series.size(), -1);
    for (const auto& ref : train_) {
        if (vocab_index_[ref.series] < 0) {
            vocab_index_[ref.series] =
                static_cast<std::ptrdiff_t>(vocab_.size());
            vocab_.push_back(table_.series[ref.series].id);
        }
    }
    if (cfg_.series_embedding && vocab_.empty())
        throw DataError("no training windows: vocabulary would be empty");
}

std::size_t WindowDataset::cov_dim() const {
    return 2 * cfg_.fourier.size() + cfg_.covariate_columns.size();
}

ModelDims WindowDataset::model_dims() const {
    ModelDims d;
    d.lag_dim = 1;
    d.cov_dim = cov_dim();
    if (cfg_.series_embedding) {
        d.cat_vocab = {vocab_.size()};
        d.cat_emb = {cfg_.embedding_dim};
    }
    return d;
}

WindowBatch WindowDataset::make_batch(const WindowRef* refs,
                                      std::size_t n) const {
    if (n == 0) throw ShapeError("make_batch: empty window list");
    const std::size_t T = cfg_.window_length();
    const std::size_t Tc = cfg_.cov_length;
    const std::size_t dcov = cov_dim();
    const std::size_t ncat = cfg_.series_embedding ? 1 : 0;
    const std::int64_t step = freq_step_seconds(table_.freq);

    std::vector<double> lag(T * n, 0.0), tgt(T * n);
    std::vector<double> cov(Tc * n * dcov);
    std::vector<std::int64_t> cat(Tc * n * ncat);
    std::vector<double> scales(n);

    WindowBatch batch;
    for (std::size_t w = 0; w < n; ++w) {
        const WindowRef& ref = refs[w];
        if (ref.series >= table_.series.size())
            throw ShapeError("make_batch: series index out of range");
        const auto& series = table_.series[ref.series];
        const auto& tf = transformed_[ref.series];
        if (ref.start + T > tf.size())
            throw ShapeError("make_batch: window exceeds series length");

        const double scale =
            cfg_.scale_windows ? mean_scale(tf.data() + ref.start, cfg_.t0)
                               : 1.0;
        scales[w] = scale;

        for (std::size_t t = 0; t < T; ++t)
            tgt[t * n + w] = tf[ref.start + t] / scale;
        for (std::size_t t = 1; t < T; ++t)
            lag[t * n + w] = tgt[(t - 1) * n + w];

        if (dcov > 0) {
            for (std::size_t t = 0; t < Tc; ++t) {
                double* row = cov.data() + (t * n + w) * dcov;
                std::size_t col = 0;
                if (!cfg_.fourier.empty()) {
                    const std::int64_t epoch =
                        series.start_epoch +
                        static_cast<std::int64_t>(ref.start + t) * step;
                    const CalendarParts parts = calendar_parts(epoch);
                    for (const auto& f : cfg_.fourier) {
                        const auto [sv, cv] = fourier_features(
                            calendar_field(parts, f.field), f.period);
                        row[col++] = sv;
                        row[col++] = cv;
                    }
                }
                for (const auto& name : cfg_.covariate_columns) {
                    const auto* colv = series.covariate(name);
                    if (ref.start + t >= colv->size())
                        throw DataError("series '" + series.id +
                                        "': covariate '" + name +
                                        "' has no value at offset " +
                                        std::to_string(ref.start + t));
                    row[col++] = (*colv)[ref.start + t];
                }
            }
        }
        if (ncat) {
            const std::ptrdiff_t idx = vocab_index_[ref.series];
            if (idx < 0)
                throw DataError("series '" + series.id +
                                "' is not in the training vocabulary");
            for (std::size_t t = 0; t < Tc; ++t) cat[t * n + w] = idx;
        }
        batch.refs.push_back(ref);
    }

    batch.y_lag = Tensor::of({T, n, 1}, std::move(lag));
    batch.y_target = Tensor::of({T, n, 1}, std::move(tgt));
    if (dcov > 0) batch.a_cov = Tensor::of({Tc, n, dcov}, std::move(cov));
    batch.a_cat = IndexTensor::of({Tc, n, ncat}, std::move(cat));
    batch.scale = std::move(scales);
    return batch;
}

std::vector<double>
WindowDataset::horizon_actuals(const WindowRef& ref) const {
    const auto& tgt = table_.series.at(ref.series).target;
    const std::size_t from = ref.start + cfg_.t0;
    if (from + cfg_.horizon > tgt.size())
        throw ShapeError("horizon_actuals: window exceeds series length");
    return {tgt.begin() + static_cast<std::ptrdiff_t>(from),
            tgt.begin() + static_cast<std::ptrdiff_t>(from + cfg_.horizon)};
}

std::vector<double> WindowDataset::history_tail(const WindowRef& ref,
                                                std::size_t period) const {
    if (period == 0 || period > cfg_.t0)
        throw ShapeError("history_tail: period must lie in [1, t0]");
    const auto& tgt = table_.series.at(ref.series).target;
    const std::size_t end = ref.start + cfg_.t0;
    return {tgt.begin() + static_cast<std::ptrdiff_t>(end - period),
            tgt.begin() + static_cast<std::ptrdiff_t>(end)};
}

double WindowDataset::window_scale(const WindowRef& ref) const {
    if (!cfg_.scale_windows) return 1.0;
    return mean_scale(transformed_.at(ref.series).data() + ref.start,
                      cfg_.t0);
}

double WindowDataset::to_original_space(double model_space_value,
                                        const WindowRef& ref) const {
    double v = model_space_value * window_scale(ref);
    if (cfg_.log_transform) v = std::expm1(v);
    return v;
}

// ---- synthetic generators ----

SynthKind parse_synth_kind(const std::string& s) {
    if (s == "seasonal") return SynthKind::seasonal;
    if (s == "heavy_tailed") return SynthKind::heavy_tailed;
    if (s == "future_driven") return SynthKind::future_driven;
    throw ConfigError("unknown synthetic dataset kind '" + s + "'");
}

std::string synth_kind_name(SynthKind k) {
    switch (k) {
    case SynthKind::seasonal: return "seasonal";
    case SynthKind::heavy_tailed: return "heavy_tailed";
    case SynthKind::future_driven: return "future_driven";
    }
    return "?";
}

SeriesTable synth_generate(SynthKind kind, const SynthOptions& opt,
                           std::uint64_t seed) {
    if (opt.n_series == 0 || opt.length == 0)
        throw ConfigError("synth: n_series and length must be positive");
    SeriesTable table;
    table.freq = Frequency::hourly;
    const std::int64_t start = parse_timestamp("2021-01-01T00:00:00");

    for (std::size_t i = 0; i < opt.n_series; ++i) {
        Rng rng(Rng::derive(seed, "synth", static_cast<std::uint64_t>(kind),
                            i));
        SeriesTable::Series s;
        char idbuf[16];
        std::snprintf(idbuf, sizeof idbuf, "s%03zu", i);
        s.id = idbuf;
        s.start_epoch = start;
        s.target.resize(opt.length);

        switch (kind) {
        case SynthKind::seasonal: {
            const double a = 1.0 + 4.0 * rng.uniform();
            const double base = a * (0.4 + 0.4 * rng.uniform());
            for (std::size_t t = 0; t < opt.length; ++t) {
                const double season = std::sin(
                    2.0 * std::numbers::pi * static_cast<double>(t) / 24.0);
                s.target[t] = a * (1.0 + season) + base +
                              rng.normal(0.0, opt.noise * a);
            }
            break;
        }
        case SynthKind::heavy_tailed: {
            const double level = 5.0 + 5.0 * rng.uniform();
            const double sc = opt.noise * level;
            for (std::size_t t = 0; t < opt.length; ++t)
                s.target[t] =
                    level + dist::sample(Family::student_t3, rng, 0.0, sc);
            break;
        }
        case SynthKind::future_driven: {
            const double base = 3.0 + 2.0 * rng.uniform();
            // promo[t] is emitted as a known covariate; the target at t
            // responds to promo[t+1], one internal draw past the table.
            std::vector<double> promo(opt.length + 1);
            for (double& p : promo)
                p = rng.uniform() < opt.promo_rate ? 1.0 : 0.0;
            for (std::size_t t = 0; t < opt.length; ++t)
                s.target[t] = base + opt.beta * promo[t + 1] +
                              rng.normal(0.0, opt.noise);
            promo.pop_back();
            s.covariates.emplace_back("promo", std::move(promo));
            break;
        }
        }
        table.series.push_back(std::move(s));
    }
    return table;
}

// ---- CSV ----

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t from = 0;
    while (true) {
        const std::size_t comma = line.find(',', from);
        if (comma == std::string::npos) {
            out.push_back(line.substr(from));
            break;
        }
        out.push_back(line.substr(from, comma - from));
        from = comma + 1;
    }
    return out;
}

double parse_double_field(const std::string& s, std::size_t line_no,
                          const std::string& column) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DataError("line " + std::to_string(line_no) +
                        ": malformed number '" + s + "' in column '" +
                        column + "'");
    }
}

} // namespace

SeriesTable ingest_csv(const std::string& path, const DatasetConfig& cfg) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open CSV file '" + path + "'");

    std::string line;
    if (!std::getline(f, line)) throw DataError("empty CSV file '" + path + "'");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> header = split_fields(line);
    if (header.size() < 3 || header[0] != "series_id" ||
        header[1] != "timestamp" || header[2] != "target")
        throw DataError(
            "CSV header must start with series_id,timestamp,target");
    const std::vector<std::string> extra(header.begin() + 3, header.end());
    for (const auto& want : cfg.covariate_columns)
        if (std::find(extra.begin(), extra.end(), want) == extra.end())
            throw DataError("CSV is missing covariate column '" + want + "'");

    struct Row {
        std::int64_t epoch;
        std::size_t line_no;
        double target;
        std::vector<double> covs;
    };
    std::vector<std::string> order; // first-appearance order of ids
    std::map<std::string, std::vector<Row>> rows;

    std::size_t line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_fields(line);
        if (fields.size() != header.size())
            throw DataError("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " fields, found " +
                            std::to_string(fields.size()));
        Row r;
        r.line_no = line_no;
        try {
            r.epoch = parse_timestamp(fields[1]);
        } catch (const DataError& e) {
            throw DataError("line " + std::to_string(line_no) + ": " +
                            e.what());
        }
        r.target = parse_double_field(fields[2], line_no, "target");
        r.covs.reserve(extra.size());
        for (std::size_t i = 0; i < extra.size(); ++i)
            r.covs.push_back(
                parse_double_field(fields[3 + i], line_no, extra[i]));
        auto [it, inserted] = rows.try_emplace(fields[0]);
        if (inserted) order.push_back(fields[0]);
        it->second.push_back(std::move(r));
    }
    if (order.empty()) throw DataError("CSV file '" + path + "' has no rows");

    SeriesTable table;
    table.freq = cfg.freq;
    const std::int64_t step = freq_step_seconds(cfg.freq);

    for (const auto& id : order) {
        auto& rv = rows[id];
        const bool sorted =
            std::is_sorted(rv.begin(), rv.end(),
                           [](const Row& a, const Row& b) {
                               return a.epoch < b.epoch;
                           });
        if (!sorted) {
            std::stable_sort(rv.begin(), rv.end(),
                             [](const Row& a, const Row& b) {
                                 return a.epoch < b.epoch;
                             });
            table.warnings.push_back("series '" + id +
                                     "': rows were out of order and have "
                                     "been sorted by timestamp");
        }
        for (std::size_t i = 1; i < rv.size(); ++i) {
            const std::int64_t diff = rv[i].epoch - rv[i - 1].epoch;
            if (diff == 0)
                throw DataError("line " + std::to_string(rv[i].line_no) +
                                ": duplicate timestamp " +
                                format_timestamp(rv[i].epoch) +
                                " in series '" + id + "'");
            if (diff != step)
                throw DataError(
                    "line " + std::to_string(rv[i].line_no) + ": series '" +
                    id + "' has a gap; expected " +
                    format_timestamp(rv[i - 1].epoch + step) + ", found " +
                    format_timestamp(rv[i].epoch));
        }

        SeriesTable::Series s;
        s.id = id;
        s.start_epoch = rv.front().epoch;
        s.target.reserve(rv.size());
        std::vector<std::vector<double>> cols(extra.size());
        for (const auto& r : rv) {
            s.target.push_back(r.target);
            for (std::size_t i = 0; i < extra.size(); ++i)
                cols[i].push_back(r.covs[i]);
        }
        for (std::size_t i = 0; i < extra.size(); ++i)
            s.covariates.emplace_back(extra[i], std::move(cols[i]));
        table.series.push_back(std::move(s));
    }
    return table;
}

void write_csv(const SeriesTable& table, const std::string& path) {
    if (table.series.empty()) throw DataError("write_csv: no series");
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot open '" + path + "' for writing");

    std::vector<std::string> cols;
    for (const auto& [name, v] : table.series.front().covariates)
        cols.push_back(name);
    f << "series_id,timestamp,target";
    for (const auto& c : cols) f << ',' << c;
    f << '\n';

    const std::int64_t step = freq_step_seconds(table.freq);
    char num[40];
    for (const auto& s : table.series) {
        for (const auto& c : cols)
            if (!s.covariate(c))
                throw DataError("write_csv: series '" + s.id +
                                "' is missing column '" + c + "'");
        for (std::size_t t = 0; t < s.target.size(); ++t) {
            f << s.id << ','
              << format_timestamp(s.start_epoch +
                                  static_cast<std::int64_t>(t) * step);
            std::snprintf(num, sizeof num, ",%.17g", s.target[t]);
            f << num;
            for (const auto& c : cols) {
                std::snprintf(num, sizeof num, ",%.17g",
                              (*s.covariate(c))[t]);
                f << num;
            }
            f << '\n';
        }
    }
    if (!f) throw DataError("failed writing CSV '" + path + "'");
}

} // namespace bitcn
