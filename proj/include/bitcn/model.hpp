#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bitcn/distributions.hpp"
#include "bitcn/tensor.hpp"

namespace bitcn {

// Architecture knobs. Defaults are the reference configuration: 12 hidden
// channels, 5 causal layers, kernel 9, dropout 0.1.
struct HyperParams {
    std::size_t state_size = 12;   // d_h, channels carried through a stack
    std::size_t layers = 5;        // causal (past-window) stack depth N
    std::size_t forward_layers = 6; // anticausal stack depth, default N + 1
    std::size_t kernel_size = 9;
    double dropout_p = 0.1;
    std::size_t groups = 4;        // anticausal conv groups, capped to divide d_h
    double sigma_floor = 1e-3;     // epsilon added onto softplus(sigma head)
    Family distribution = Family::student_t3;
    bool softplus_mu = true;       // nonnegative location head
    bool forward_module = true;    // false: plain causal TCN over the past window
    enum class Join { concat, additive } join = Join::concat;

    void validate() const;
    // Largest divisor of state_size not exceeding `groups`.
    std::size_t effective_groups() const;
};

// Input widths the model is wired for. Covariates are numeric channels;
// categoricals are id streams, each with its own vocabulary and embedding.
struct ModelDims {
    std::size_t lag_dim = 1;
    std::size_t cov_dim = 0;
    std::vector<std::size_t> cat_vocab;
    std::vector<std::size_t> cat_emb;

    std::size_t emb_total() const;
    bool operator==(const ModelDims&) const = default;
};

// One residual temporal block: weight-normalized dilated conv (d_h -> 4 d_h),
// GELU, dropout, weight-normalized dense (4 d_h -> 2 d_h) whose output splits
// into a residual half and a skip half.
struct TemporalBlockParams {
    ConvSpec conv;
    double dropout_p = 0.0;
    Tensor conv_v, conv_g, conv_b;
    Tensor dense_v, dense_g, dense_b;
};

struct BlockOut {
    Tensor hidden; // x + first half of the dense output
    Tensor skip;   // second half
};

BlockOut temporal_block_forward(const Tensor& x, const TemporalBlockParams& p,
                                bool training, Rng* rng);

// Runs the blocks in sequence, threading the hidden state, and returns the
// sum of the skip outputs.
Tensor stack_forward(const Tensor& x,
                     const std::vector<TemporalBlockParams>& blocks,
                     bool training, Rng* rng);

class BiTCNModel {
public:
    BiTCNModel(HyperParams hp, ModelDims dims, std::uint64_t init_seed);

    struct Output {
        Tensor mu;    // (T, batch, 1)
        Tensor sigma; // (T, batch, 1), always >= sigma_floor
    };

    // y_lag: (T, batch, lag_dim); a_cov: (T_c, batch, cov_dim) or undefined
    // when cov_dim is 0; a_cat: (T_c, batch, n_cat) ids. T_c >= T. The output
    // at step t conditions on lags up to t and covariates over the whole
    // T_c window (only up to t when the forward module is disabled).
    Output forward(const Tensor& y_lag, const Tensor& a_cov,
                   const IndexTensor& a_cat, bool training, Rng* rng) const;

    const std::vector<std::pair<std::string, Tensor>>& parameters() const {
        return params_;
    }
    Tensor param(const std::string& name) const;
    std::size_t parameter_count() const;
    void zero_grad();

    // Deep copy of every parameter's values, and its inverse. Used for
    // best-epoch restore during training.
    std::vector<std::vector<double>> snapshot() const;
    void restore(const std::vector<std::vector<double>>& snap);

    const HyperParams& hyper() const { return hp_; }
    const ModelDims& dims() const { return dims_; }
    std::uint64_t init_seed() const { return init_seed_; }
    const std::vector<TemporalBlockParams>& backward_blocks() const {
        return bwd_;
    }
    const std::vector<TemporalBlockParams>& forward_blocks() const {
        return fwd_;
    }

private:
    Tensor register_param(const std::string& name, Shape shape);
    void init_params();

    HyperParams hp_;
    ModelDims dims_;
    std::uint64_t init_seed_ = 0;
    std::vector<std::pair<std::string, Tensor>> params_;

    std::vector<Tensor> embed_;
    Tensor proj_lag_w_, proj_lag_b_;
    Tensor proj_cov_w_, proj_cov_b_;
    std::vector<TemporalBlockParams> bwd_, fwd_;
    Tensor head_mu_w_, head_mu_b_, head_sigma_w_, head_sigma_b_;
};

// Throws DataError naming the first field on which a checkpointed model
// cannot consume data with the given dims.
void check_dims_compatible(const ModelDims& model_dims,
                           const ModelDims& data_dims);

// Versioned binary checkpoint: magic, format version, key=value header
// (hyperparameters, dims, epoch, rng state), named parameter tensors as
// little-endian doubles, trailing CRC32 over everything before it.
struct CheckpointExtras {
    std::uint64_t epoch = 0;
    std::string rng_state;
    std::string build;       // build version string
    std::string config_echo; // effective run config, newline separated
    std::vector<std::pair<std::string, std::vector<double>>> opt_state;
};

void save_checkpoint(const BiTCNModel& model, const std::string& path,
                     const CheckpointExtras* extras = nullptr);
BiTCNModel load_checkpoint(const std::string& path,
                           CheckpointExtras* extras = nullptr);

} // namespace bitcn
