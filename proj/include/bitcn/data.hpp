#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bitcn/model.hpp"
#include "bitcn/tensor.hpp"

namespace bitcn {

enum class Frequency { hourly, daily };

std::int64_t freq_step_seconds(Frequency f);
Frequency parse_frequency(const std::string& s);
std::string frequency_name(Frequency f);

// Minimal proleptic-Gregorian calendar support, UTC only.
struct CalendarParts {
    int year = 1970;
    int month = 1;       // 1..12
    int day = 1;         // 1..31
    int hour = 0;        // 0..23
    int day_of_week = 4; // 0 = Sunday
    int day_of_year = 1; // 1..366
};
CalendarParts calendar_parts(std::int64_t epoch_seconds);
// Accepts YYYY-MM-DD, optionally followed by 'T' or ' ' and HH:MM[:SS].
std::int64_t parse_timestamp(const std::string& text);
std::string format_timestamp(std::int64_t epoch_seconds);

// (sin, cos) of value * 2*pi / period.
std::pair<double, double> fourier_features(double value, double period);

// scale = 1 + mean(history). Throws DataError unless the result is a
// positive finite number, since targets are divided by it.
double mean_scale(const double* history, std::size_t n);

// Raw aligned series storage. Covariate columns are per-series and aligned
// row by row with the target.
struct SeriesTable {
    Frequency freq = Frequency::hourly;

    struct Series {
        std::string id;
        std::int64_t start_epoch = 0;
        std::vector<double> target;
        std::vector<std::pair<std::string, std::vector<double>>> covariates;

        const std::vector<double>* covariate(const std::string& name) const;
    };

    std::vector<Series> series;
    std::vector<std::string> warnings;
};

struct FourierSpec {
    // field: hour_of_day, day_of_week, day_of_month, month, day_of_year
    std::string field;
    double period = 24.0;
};

struct DatasetConfig {
    Frequency freq = Frequency::hourly;
    std::size_t t0 = 96;       // conditioning steps per window
    std::size_t horizon = 24;  // forecast steps per window
    std::size_t cov_length = 120; // covariate steps per window, >= t0 + horizon
    std::vector<FourierSpec> fourier;
    std::vector<std::string> covariate_columns; // known-in-advance CSV columns
    bool series_embedding = true;
    std::size_t embedding_dim = 20;
    bool scale_windows = true; // divide each window by its history mean scale
    bool log_transform = false;
    std::size_t stride = 1;      // training window stride
    std::size_t eval_stride = 0; // val/test stride; 0 means horizon
    double train_frac = 0.8;
    double val_frac = 0.1;
    std::size_t sample_cap = 500000; // training windows drawn per epoch

    std::size_t window_length() const { return t0 + horizon; }
    void validate() const;
};

struct WindowRef {
    std::size_t series = 0;
    std::size_t start = 0;
    bool operator==(const WindowRef&) const = default;
};

// One assembled minibatch in model space (transformed and scaled).
struct WindowBatch {
    Tensor y_lag;      // (T, b, 1); position 0 is the zero pre-history lag
    Tensor y_target;   // (T, b, 1)
    Tensor a_cov;      // (T_c, b, cov_dim); undefined when cov_dim == 0
    IndexTensor a_cat; // (T_c, b, n_cat)
    std::vector<double> scale; // per window
    std::vector<WindowRef> refs;
};

// Window enumeration, split assignment, vocabulary, and batch assembly.
// Splits are disjoint in forecast-start dates: a window whose first
// forecast step falls before train_end belongs to train, before val_end to
// validation, and to test otherwise.
class WindowDataset {
public:
    WindowDataset(SeriesTable table, DatasetConfig cfg);

    const DatasetConfig& config() const { return cfg_; }
    const SeriesTable& table() const { return table_; }
    const std::vector<WindowRef>& train_windows() const { return train_; }
    const std::vector<WindowRef>& val_windows() const { return val_; }
    const std::vector<WindowRef>& test_windows() const { return test_; }
    std::size_t skipped_series() const { return skipped_series_; }
    std::int64_t train_end_epoch() const { return train_end_epoch_; }
    std::int64_t val_end_epoch() const { return val_end_epoch_; }

    std::size_t cov_dim() const;
    ModelDims model_dims() const;
    const std::vector<std::string>& vocab() const { return vocab_; }

    WindowBatch make_batch(const WindowRef* refs, std::size_t n) const;
    WindowBatch make_batch(const std::vector<WindowRef>& refs) const {
        return make_batch(refs.data(), refs.size());
    }

    // Original-space actuals over the forecast range of a window.
    std::vector<double> horizon_actuals(const WindowRef& ref) const;
    // Last `period` conditioning observations, original space.
    std::vector<double> history_tail(const WindowRef& ref,
                                     std::size_t period) const;
    double window_scale(const WindowRef& ref) const;
    // Inverse of the model-space transform for one value from this window.
    double to_original_space(double model_space_value,
                             const WindowRef& ref) const;

private:
    void enumerate_windows();

    SeriesTable table_;
    DatasetConfig cfg_;
    std::vector<std::vector<double>> transformed_;
    std::vector<std::string> vocab_;
    std::vector<std::ptrdiff_t> vocab_index_; // per series, -1 = not in vocab
    std::vector<WindowRef> train_, val_, test_;
    std::int64_t train_end_epoch_ = 0, val_end_epoch_ = 0;
    std::size_t skipped_series_ = 0;
};

enum class SynthKind { seasonal, heavy_tailed, future_driven };
SynthKind parse_synth_kind(const std::string& s);
std::string synth_kind_name(SynthKind k);

struct SynthOptions {
    std::size_t n_series = 20;
    std::size_t length = 400;
    // Meaning varies by kind: seasonal - gaussian noise sd relative to the
    // series amplitude; heavy_tailed - t3 noise scale relative to the level;
    // future_driven - absolute gaussian noise sd.
    double noise = 0.02;
    double beta = 2.0;       // future_driven: promo coefficient
    double promo_rate = 0.3; // future_driven: promo probability per step
};

// Deterministic synthetic generators (hourly, starting 2021-01-01):
//   seasonal:      y = a_i (1 + sin(2 pi t / 24)) + noise; the noise term
//                  carries a per-series positive base level so the daily
//                  trough stays away from zero.
//   heavy_tailed:  y = level_i + s_i * t3 draw.
//   future_driven: y_t = base_i + beta * promo[t+1] + gaussian noise, with
//                  promo emitted as a known covariate column. The target
//                  anticipates the next step's promo, so the relationship
//                  is invisible to a purely causal conditioner.
SeriesTable synth_generate(SynthKind kind, const SynthOptions& opt,
                           std::uint64_t seed);

// CSV: header series_id,timestamp,target[,covariate columns...].
// Rows may arrive out of order (sorted with a warning); duplicate or gapped
// timestamps and malformed fields raise DataError with the line number.
SeriesTable ingest_csv(const std::string& path, const DatasetConfig& cfg);
void write_csv(const SeriesTable& table, const std::string& path);

} // namespace bitcn
