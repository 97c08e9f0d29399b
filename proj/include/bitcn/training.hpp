#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bitcn/data.hpp"
#include "bitcn/model.hpp"

namespace bitcn {

// Gradient clipping policy. The default switches clipping on only for the
// Gaussian head (max norm 10); the t(3) head has bounded gradients and does
// not need it.
struct ClipSetting {
    enum class Mode { automatic, none, fixed } mode = Mode::automatic;
    double max_norm = 10.0;

    static ClipSetting parse(const std::string& text);
    std::string to_string() const;
    // Max norm in effect for this distribution, or 0 when clipping is off.
    double resolve(Family f) const;
};

struct TrainConfig {
    double learning_rate = 5e-4;
    std::size_t batch_size = 128;
    std::size_t max_epochs = 100;
    std::size_t patience = 5;
    ClipSetting clip;
    bool horizon_only_loss = true; // false: NLL over the whole window
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    // Wall-clock per epoch is recorded only when set; otherwise records show
    // 0.000 so that identical runs produce identical artifacts.
    bool record_timing = true;

    void validate() const;
};

// Bias-corrected Adam. Moment buffers are aligned with model.parameters().
struct AdamState {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::uint64_t step = 0;
    std::vector<std::vector<double>> m, v;

    void init(const BiTCNModel& model);
    bool initialized() const { return !m.empty(); }
};

// One optimizer step from the gradients currently on the parameters.
// Throws NumericError when any gradient is NaN.
void adam_step(BiTCNModel& model, AdamState& state, double lr);

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the applied scaling (1.0 when no clipping happened).
double clip_gradients(BiTCNModel& model, double max_norm);
double global_grad_norm(const BiTCNModel& model);

// Strict-improvement early stopping: an epoch counts as progress only when
// its validation loss is strictly below the best seen.
struct EarlyStopper {
    std::size_t patience = 5;
    double best = 0.0;
    std::size_t best_epoch = 0; // 1-based; 0 until the first update
    std::size_t bad_epochs = 0;

    bool update(double val_loss, std::size_t epoch);
    bool should_stop() const { return bad_epochs >= patience; }
};

struct EpochRecord {
    std::size_t epoch = 0; // 1-based
    double train_nll = 0.0;
    double val_nll = 0.0;
    double seconds = 0.0;
};

struct RunRecord {
    std::uint64_t seed = 0;
    double learning_rate = 0.0;
    std::size_t batch_size = 0;
    std::vector<EpochRecord> epochs;
    std::size_t stopped_epoch = 0;
    std::size_t best_epoch = 0;
    double best_val_nll = 0.0;
    bool diverged = false;
    std::string divergence_reason;
    std::string checkpoint; // path of the saved best model, may be empty

    std::string to_text() const;
};

// Mean NLL over the given windows with dropout off and no graph recording.
// Weighted by window count across batches.
double evaluate_nll(const BiTCNModel& model, const WindowDataset& data,
                    const std::vector<WindowRef>& refs,
                    std::size_t batch_size, bool horizon_only);

// Full training loop: per epoch, sample up to sample_cap training windows
// (seeded shuffle), iterate minibatches, backprop the NLL, clip when
// configured, Adam step; then validation NLL with dropout off. Stops early
// after `patience` epochs without strict improvement and restores the best
// epoch's parameters. A numeric failure marks the record diverged (with the
// epoch and reason), restores the best parameters if any, and returns.
RunRecord train(BiTCNModel& model, const WindowDataset& data,
                const TrainConfig& cfg, std::uint64_t seed);

struct GridSpec {
    std::vector<double> learning_rates = {1e-3, 5e-4, 1e-4};
    std::vector<std::size_t> batch_sizes = {128, 256, 512};
};

struct GridCell {
    double learning_rate = 0.0;
    std::size_t batch_size = 0;
    std::vector<RunRecord> runs;       // one per seed
    std::vector<double> val_nlls;      // best val NLL of non-diverged runs
    double mean_val_nll = 0.0;         // over val_nlls; NaN when none
    bool usable = false;               // at least one non-diverged run
};

struct GridResult {
    std::vector<GridCell> cells;
    std::size_t best_cell = 0; // index into cells
    std::string to_text() const;
};

// Trains every (lr, batch) cell for every seed on fresh models (init seed
// derived from the run seed) and picks the usable cell with the lowest mean
// best-validation NLL; ties break toward smaller lr, then smaller batch.
// Throws ConfigError when the grid is empty and DataError when every cell
// diverged.
GridResult grid_search(const HyperParams& hp, const WindowDataset& data,
                       const TrainConfig& base, const GridSpec& grid);

} // namespace bitcn
