#pragma once

#include <string>

#include "bitcn/data.hpp"
#include "bitcn/evaluation.hpp"
#include "bitcn/model.hpp"
#include "bitcn/training.hpp"

namespace bitcn {

// One run definition: dataset, model, training, and evaluation settings,
// parsed from an INI-style file ([section] headers, key = value lines,
// '#' comments). echo() serializes the effective config canonically; parsing
// the echo reproduces the config, and every output artifact embeds it.
struct RunConfig {
    // [dataset]
    std::string source = "synth"; // "synth" or "csv"
    SynthKind synth_kind = SynthKind::seasonal;
    SynthOptions synth;
    std::uint64_t synth_seed = 1;
    std::string csv_path;
    DatasetConfig dataset;

    // [model]
    HyperParams hyper;
    bool forward_layers_set = false; // unset: resolve() uses layers + 1

    // [train]
    TrainConfig train;

    // [eval]
    DecodeMode decode = DecodeMode::analytic(); // config default; the
    // decode_forecasts API itself defaults to monte_carlo(100)
    std::size_t naive_period = 24;
    bool literal_sum_nrmse = false;
    std::string eval_split = "test"; // train | val | test

    // [run]
    std::string out_dir = "out";
    std::size_t threads = 1;

    static RunConfig load(const std::string& path);
    static RunConfig parse_text(const std::string& text,
                                const std::string& origin);
    // spec is "section.key=value"; unknown names raise ConfigError.
    void apply_override(const std::string& spec);
    void set_key(const std::string& section, const std::string& key,
                 const std::string& value, const std::string& where);
    // Fills derived defaults (forward_layers) and validates everything.
    void resolve();
    std::string echo() const;

    // Builds the configured table: synthetic generator or CSV ingestion.
    SeriesTable load_table() const;
    const std::vector<WindowRef>& split_windows(const WindowDataset& d) const;
};

// From git describe at build time, "unknown" when unavailable.
std::string build_version();

} // namespace bitcn
