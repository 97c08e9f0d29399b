// Command-line front end: train / evaluate / ablate / synth / grid.
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "bitcn/config.hpp"
#include "bitcn/errors.hpp"
#include "bitcn/evaluation.hpp"
#include "bitcn/kernels.hpp"
#include "bitcn/training.hpp"

namespace {

using namespace bitcn;

struct CommonArgs {
    std::string config_path;
    std::string out;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::size_t threads = 0;
    bool threads_set = false;
};

std::string fmt_nll(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void add_common(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--config", a.config_path, "run configuration file");
    cmd->add_option("--out", a.out, "output directory (overrides run.out_dir)");
    cmd->add_option("--override", a.overrides,
                    "config override as section.key=value (repeatable)");
    cmd->add_option("--seed", a.seed, "single seed replacing the seed list")
        ->each([&a](const std::string&) { a.seed_set = true; });
    cmd->add_option("--threads", a.threads, "kernel thread count")
        ->each([&a](const std::string&) { a.threads_set = true; });
}

RunConfig make_config(const CommonArgs& a, bool require_file) {
    if (require_file && a.config_path.empty())
        throw ConfigError("this command needs --config");
    RunConfig cfg = a.config_path.empty() ? RunConfig{}
                                          : RunConfig::load(a.config_path);
    for (const auto& o : a.overrides) cfg.apply_override(o);
    if (a.seed_set) {
        cfg.train.seeds = {a.seed};
        cfg.synth_seed = a.seed;
    }
    if (!a.out.empty()) cfg.out_dir = a.out;
    if (a.threads_set) cfg.threads = a.threads;
    cfg.resolve();
    kernels::set_threads(cfg.threads);
    return cfg;
}

std::string artifact_header(const RunConfig& cfg) {
    std::string h = "# bitcn " + build_version() + "\n";
    std::istringstream in(cfg.echo());
    std::string line;
    while (std::getline(in, line)) h += "# " + line + "\n";
    return h;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    f << content;
    if (!f) throw DataError("failed writing '" + path + "'");
}

std::string seed_tag(std::uint64_t seed) {
    return "seed" + std::to_string(seed);
}

CheckpointExtras run_extras(const RunConfig& cfg, const RunRecord& rec) {
    CheckpointExtras ex;
    ex.epoch = rec.best_epoch;
    ex.build = build_version();
    ex.config_echo = cfg.echo();
    return ex;
}

// Trains one seed on a fresh model and returns it with the record.
struct SeedRun {
    RunRecord record;
    BiTCNModel model;
};

SeedRun run_one_seed(const RunConfig& cfg, const WindowDataset& data,
                     std::uint64_t seed) {
    BiTCNModel model(cfg.hyper, data.model_dims(), Rng::derive(seed, "init"));
    RunRecord rec = train(model, data, cfg.train, seed);
    return {std::move(rec), std::move(model)};
}

int cmd_train(const CommonArgs& args, bool grid_mode) {
    RunConfig cfg = make_config(args, true);
    const WindowDataset data(cfg.load_table(), cfg.dataset);
    std::filesystem::create_directories(cfg.out_dir);
    const std::string header = artifact_header(cfg);
    for (const auto& w : data.table().warnings)
        std::cerr << "warning: " << w << "\n";

    if (grid_mode) {
        GridSpec spec; // the standard 3x3 grid
        const GridResult result = grid_search(cfg.hyper, data, cfg.train, spec);
        write_file(cfg.out_dir + "/grid.txt", header + result.to_text());
        const GridCell& best = result.cells[result.best_cell];
        std::cout << "grid best lr " << best.learning_rate << " batch "
                  << best.batch_size << " mean_val_nll " << best.mean_val_nll
                  << "\n";
        return 0;
    }

    std::vector<RunRecord> records;
    std::vector<ForecastResult> all_forecasts;
    MetricsReport report;
    report.parameter_count = 0;
    report.config_echo = cfg.echo() + "build_version = " + build_version();
    const auto& eval_refs = cfg.split_windows(data);

    for (std::uint64_t seed : cfg.train.seeds) {
        SeedRun run = run_one_seed(cfg, data, seed);
        report.parameter_count = run.model.parameter_count();
        const std::string ckpt =
            cfg.out_dir + "/model_" + seed_tag(seed) + ".ckpt";
        const CheckpointExtras ex = run_extras(cfg, run.record);
        save_checkpoint(run.model, ckpt, &ex);
        run.record.checkpoint = ckpt;
        write_file(cfg.out_dir + "/run_" + seed_tag(seed) + ".txt",
                   header + run.record.to_text());
        std::cout << "seed " << seed << ": "
                  << (run.record.diverged
                          ? "diverged: " + run.record.divergence_reason
                          : "best val nll " +
                                std::to_string(run.record.best_val_nll) +
                                " at epoch " +
                                std::to_string(run.record.best_epoch))
                  << "\n";

        if (!run.record.diverged && !eval_refs.empty()) {
            const auto forecasts = decode_forecasts(
                run.model, data, eval_refs, cfg.decode, seed);
            report.seeds.push_back(seed);
            report.per_seed.push_back(
                compute_metrics(forecasts, cfg.literal_sum_nrmse));
            if (all_forecasts.empty()) all_forecasts = forecasts;
        }
        records.push_back(std::move(run.record));
    }

    write_curves_csv(records, cfg.out_dir + "/curves.csv");
    if (!report.per_seed.empty()) {
        report.partial = report.per_seed.size() < cfg.train.seeds.size();
        report.finalize();
        emit_report(report, cfg.out_dir + "/metrics.txt");
        write_plot_csv(data, all_forecasts, cfg.out_dir + "/plot.csv");
    }
    const bool all_diverged =
        std::all_of(records.begin(), records.end(),
                    [](const RunRecord& r) { return r.diverged; });
    if (all_diverged) {
        std::cerr << "error: every seed diverged\n";
        return 3;
    }
    return 0;
}

int cmd_evaluate(const CommonArgs& args, const std::string& checkpoint) {
    RunConfig cfg = make_config(args, true);
    const WindowDataset data(cfg.load_table(), cfg.dataset);
    std::filesystem::create_directories(cfg.out_dir);

    CheckpointExtras ex;
    const BiTCNModel model = load_checkpoint(checkpoint, &ex);
    check_dims_compatible(model.dims(), data.model_dims());
    const HyperParams& a = model.hyper();
    const HyperParams& b = cfg.hyper;
    auto mismatch = [](const std::string& field) {
        throw DataError("checkpoint does not match the config: field '" +
                        field + "' differs");
    };
    if (a.state_size != b.state_size) mismatch("state_size");
    if (a.layers != b.layers) mismatch("layers");
    if (a.forward_layers != b.forward_layers) mismatch("forward_layers");
    if (a.kernel_size != b.kernel_size) mismatch("kernel_size");
    if (a.groups != b.groups) mismatch("groups");
    if (a.distribution != b.distribution) mismatch("distribution");
    if (a.softplus_mu != b.softplus_mu) mismatch("softplus_mu");
    if (a.forward_module != b.forward_module) mismatch("forward_module");
    if (a.join != b.join) mismatch("join");

    std::ostringstream out;
    out << artifact_header(cfg);
    if (!data.train_windows().empty())
        out << "train_nll "
            << fmt_nll(evaluate_nll(model, data, data.train_windows(),
                                    cfg.train.batch_size,
                                    cfg.train.horizon_only_loss))
            << "\n";
    if (!data.val_windows().empty())
        out << "val_nll "
            << fmt_nll(evaluate_nll(model, data, data.val_windows(),
                                    cfg.train.batch_size,
                                    cfg.train.horizon_only_loss))
            << "\n";
    if (!data.test_windows().empty())
        out << "test_nll "
            << fmt_nll(evaluate_nll(model, data, data.test_windows(),
                                    cfg.train.batch_size,
                                    cfg.train.horizon_only_loss))
            << "\n";

    const auto& refs = cfg.split_windows(data);
    if (!refs.empty()) {
        const std::uint64_t seed = cfg.train.seeds.front();
        const auto forecasts =
            decode_forecasts(model, data, refs, cfg.decode, seed);
        MetricsReport report;
        report.parameter_count = model.parameter_count();
        report.config_echo = cfg.echo() + "build_version = " + build_version();
        report.seeds = {seed};
        report.per_seed = {compute_metrics(forecasts, cfg.literal_sum_nrmse)};
        report.finalize();
        emit_report(report, cfg.out_dir + "/metrics.txt");
        write_plot_csv(data, forecasts, cfg.out_dir + "/plot.csv");
        out << "smape " << fmt_nll(report.mean.smape) << "\n";
        out << "mq " << fmt_nll(report.mean.mq) << "\n";
    }
    out << "parameter_count " << model.parameter_count() << "\n";
    write_file(cfg.out_dir + "/eval.txt", out.str());
    std::cout << out.str();
    return 0;
}

int cmd_ablate(const CommonArgs& args) {
    RunConfig cfg = make_config(args, true);
    const WindowDataset data(cfg.load_table(), cfg.dataset);
    std::filesystem::create_directories(cfg.out_dir);

    struct Cell {
        bool forward;
        Family family;
    };
    const Cell cells[4] = {{true, Family::student_t3},
                           {false, Family::student_t3},
                           {true, Family::gaussian},
                           {false, Family::gaussian}};

    std::ostringstream table;
    table << artifact_header(cfg);
    std::vector<std::string> seed_names;
    for (auto s : cfg.train.seeds) seed_names.push_back(std::to_string(s));
    table << "# shared seeds:";
    for (const auto& s : seed_names) table << " " << s;
    table << "\n";
    table << "forward distribution params smape nrmse q50 mq seeds_ok\n";

    for (const Cell& cell : cells) {
        RunConfig c = cfg;
        c.hyper.forward_module = cell.forward;
        c.hyper.distribution = cell.family;
        std::size_t params = 0, ok = 0;
        SplitMetrics mean{};
        std::string error;
        try {
            const auto& refs = c.split_windows(data);
            if (refs.empty()) throw DataError("evaluation split is empty");
            std::vector<SplitMetrics> per_seed;
            for (std::uint64_t seed : c.train.seeds) {
                SeedRun run = run_one_seed(c, data, seed);
                params = run.model.parameter_count();
                if (run.record.diverged) continue;
                per_seed.push_back(compute_metrics(
                    decode_forecasts(run.model, data, refs, c.decode, seed),
                    c.literal_sum_nrmse));
            }
            ok = per_seed.size();
            for (const auto& m : per_seed) {
                mean.smape += m.smape;
                mean.nrmse += m.nrmse;
                mean.q[4] += m.q[4];
                mean.mq += m.mq;
            }
            if (ok) {
                mean.smape /= double(ok);
                mean.nrmse /= double(ok);
                mean.q[4] /= double(ok);
                mean.mq /= double(ok);
            }
        } catch (const std::exception& e) {
            error = e.what();
        }
        table << (cell.forward ? "on " : "off ")
              << family_name(cell.family) << " " << params << " ";
        if (!error.empty()) {
            table << "failed: " << error << "\n";
        } else if (ok == 0) {
            table << "- - - - 0/" << cfg.train.seeds.size() << "\n";
        } else {
            char buf[160];
            std::snprintf(buf, sizeof buf, "%.6f %.6f %.6f %.6f %zu/%zu\n",
                          mean.smape, mean.nrmse, mean.q[4], mean.mq, ok,
                          cfg.train.seeds.size());
            table << buf;
        }
    }
    write_file(cfg.out_dir + "/ablation.txt", table.str());
    std::cout << table.str();
    return 0;
}

int cmd_synth(const CommonArgs& args, const std::string& kind,
              const std::string& out_file) {
    RunConfig cfg = make_config(args, false);
    cfg.synth_kind = parse_synth_kind(kind);
    const SeriesTable table =
        synth_generate(cfg.synth_kind, cfg.synth, cfg.synth_seed);
    write_csv(table, out_file);
    std::cout << "wrote " << table.series.size() << " series to " << out_file
              << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"BiTCN probabilistic time series forecaster"};
    app.require_subcommand(1);

    CommonArgs train_args, grid_args, eval_args, ablate_args, synth_args;
    std::string eval_checkpoint, synth_kind, synth_out = "synth.csv";

    CLI::App* train_cmd =
        app.add_subcommand("train", "train one model per configured seed");
    add_common(train_cmd, train_args);

    CLI::App* grid_cmd = app.add_subcommand(
        "grid", "grid search over learning rate and batch size");
    add_common(grid_cmd, grid_args);

    CLI::App* eval_cmd =
        app.add_subcommand("evaluate", "evaluate a checkpoint on a dataset");
    eval_cmd->add_option("checkpoint", eval_checkpoint, "checkpoint file")
        ->required();
    add_common(eval_cmd, eval_args);

    CLI::App* ablate_cmd = app.add_subcommand(
        "ablate", "2x2 ablation: forward module x distribution");
    add_common(ablate_cmd, ablate_args);

    CLI::App* synth_cmd =
        app.add_subcommand("synth", "write a synthetic dataset as CSV");
    synth_cmd
        ->add_option("kind", synth_kind,
                     "seasonal | heavy_tailed | future_driven")
        ->required();
    synth_cmd->add_option("--out-file", synth_out, "output CSV path");
    add_common(synth_cmd, synth_args);

    try {
        app.parse(argc, argv);
        if (train_cmd->parsed()) return cmd_train(train_args, false);
        if (grid_cmd->parsed()) return cmd_train(grid_args, true);
        if (eval_cmd->parsed()) return cmd_evaluate(eval_args, eval_checkpoint);
        if (ablate_cmd->parsed()) return cmd_ablate(ablate_args);
        if (synth_cmd->parsed())
            return cmd_synth(synth_args, synth_kind, synth_out);
        return 1;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 1;
    } catch (const bitcn::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const bitcn::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const bitcn::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
