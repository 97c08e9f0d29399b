#include "bitcn/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "bitcn/errors.hpp"

#ifndef BITCN_BUILD_VERSION
#define BITCN_BUILD_VERSION "unknown"
#endif

namespace bitcn {

std::string build_version() { return BITCN_BUILD_VERSION; }

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw ConfigError(where + ": " + what);
}

bool parse_bool(const std::string& v, const std::string& where,
                const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(where, "key '" + key + "' expects a boolean, got '" + v + "'");
}

double parse_real(const std::string& v, const std::string& where,
                  const std::string& key) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        fail(where, "key '" + key + "' expects a number, got '" + v + "'");
    }
}

std::size_t parse_count(const std::string& v, const std::string& where,
                        const std::string& key) {
    try {
        std::size_t used = 0;
        const long long n = std::stoll(v, &used);
        if (used != v.size() || n < 0) throw std::invalid_argument(v);
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        fail(where,
             "key '" + key + "' expects a nonnegative integer, got '" + v +
                 "'");
    }
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(v);
    while (std::getline(in, cur, ',')) {
        cur = trim(cur);
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& v,
                                           const std::string& where) {
    std::vector<std::uint64_t> out;
    for (const auto& item : split_list(v))
        out.push_back(parse_count(item, where, "seeds"));
    if (out.empty()) fail(where, "seeds list is empty");
    return out;
}

std::vector<FourierSpec> parse_fourier(const std::string& v,
                                       const std::string& where) {
    std::vector<FourierSpec> out;
    for (const auto& item : split_list(v)) {
        const std::size_t colon = item.find(':');
        if (colon == std::string::npos)
            fail(where, "fourier entry '" + item +
                            "' must look like field:period");
        FourierSpec spec;
        spec.field = trim(item.substr(0, colon));
        spec.period =
            parse_real(trim(item.substr(colon + 1)), where, "fourier");
        out.push_back(std::move(spec));
    }
    return out;
}

std::string join_list(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ',';
        out += items[i];
    }
    return out;
}

} // namespace

void RunConfig::apply_override(const std::string& spec) {
    const std::string where = "override '" + spec + "'";
    const std::size_t eq = spec.find('=');
    if (eq == std::string::npos)
        fail(where, "expected section.key=value");
    const std::string left = trim(spec.substr(0, eq));
    const std::string value = trim(spec.substr(eq + 1));
    const std::size_t dot = left.find('.');
    if (dot == std::string::npos)
        fail(where, "expected section.key=value");
    set_key(left.substr(0, dot), left.substr(dot + 1), value, where);
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse_text(buf.str(), path);
}

RunConfig RunConfig::parse_text(const std::string& text,
                                const std::string& origin) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string where =
            origin + ":" + std::to_string(line_no);
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[') {
            if (t.back() != ']') fail(where, "unterminated section header");
            section = trim(t.substr(1, t.size() - 2));
            if (section != "dataset" && section != "model" &&
                section != "train" && section != "eval" && section != "run")
                fail(where, "unknown section [" + section + "]");
            continue;
        }
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos) fail(where, "expected key = value");
        if (section.empty()) fail(where, "key outside any [section]");
        cfg.set_key(section, trim(t.substr(0, eq)), trim(t.substr(eq + 1)),
                    where);
    }
    return cfg;
}

void RunConfig::set_key(const std::string& section, const std::string& key,
                        const std::string& value, const std::string& where) {
    if (section == "dataset") {
        if (key == "source") {
            if (value != "synth" && value != "csv")
                fail(where, "source must be 'synth' or 'csv'");
            source = value;
        } else if (key == "kind") {
            synth_kind = parse_synth_kind(value);
        } else if (key == "synth_series") {
            synth.n_series = parse_count(value, where, key);
        } else if (key == "synth_length") {
            synth.length = parse_count(value, where, key);
        } else if (key == "synth_noise") {
            synth.noise = parse_real(value, where, key);
        } else if (key == "synth_beta") {
            synth.beta = parse_real(value, where, key);
        } else if (key == "synth_promo_rate") {
            synth.promo_rate = parse_real(value, where, key);
        } else if (key == "synth_seed") {
            synth_seed = parse_count(value, where, key);
        } else if (key == "path") {
            csv_path = value;
        } else if (key == "freq") {
            dataset.freq = parse_frequency(value);
        } else if (key == "t0") {
            dataset.t0 = parse_count(value, where, key);
        } else if (key == "horizon") {
            dataset.horizon = parse_count(value, where, key);
        } else if (key == "cov_length") {
            dataset.cov_length = parse_count(value, where, key);
        } else if (key == "fourier") {
            dataset.fourier = parse_fourier(value, where);
        } else if (key == "covariates") {
            dataset.covariate_columns = split_list(value);
        } else if (key == "series_embedding") {
            dataset.series_embedding = parse_bool(value, where, key);
        } else if (key == "embedding_dim") {
            dataset.embedding_dim = parse_count(value, where, key);
        } else if (key == "scale_windows") {
            dataset.scale_windows = parse_bool(value, where, key);
        } else if (key == "log_transform") {
            dataset.log_transform = parse_bool(value, where, key);
        } else if (key == "stride") {
            dataset.stride = parse_count(value, where, key);
        } else if (key == "eval_stride") {
            dataset.eval_stride = parse_count(value, where, key);
        } else if (key == "train_frac") {
            dataset.train_frac = parse_real(value, where, key);
        } else if (key == "val_frac") {
            dataset.val_frac = parse_real(value, where, key);
        } else if (key == "sample_cap") {
            dataset.sample_cap = parse_count(value, where, key);
        } else {
            fail(where, "unknown key '" + key + "' in [dataset]");
        }
    } else if (section == "model") {
        if (key == "state_size") {
            hyper.state_size = parse_count(value, where, key);
        } else if (key == "layers") {
            hyper.layers = parse_count(value, where, key);
        } else if (key == "forward_layers") {
            hyper.forward_layers = parse_count(value, where, key);
            forward_layers_set = true;
        } else if (key == "kernel_size") {
            hyper.kernel_size = parse_count(value, where, key);
        } else if (key == "dropout") {
            hyper.dropout_p = parse_real(value, where, key);
        } else if (key == "groups") {
            hyper.groups = parse_count(value, where, key);
        } else if (key == "sigma_floor") {
            hyper.sigma_floor = parse_real(value, where, key);
        } else if (key == "distribution") {
            hyper.distribution = parse_family(value);
        } else if (key == "softplus_mu") {
            hyper.softplus_mu = parse_bool(value, where, key);
        } else if (key == "forward_module") {
            hyper.forward_module = parse_bool(value, where, key);
        } else if (key == "join") {
            if (value == "concat")
                hyper.join = HyperParams::Join::concat;
            else if (value == "additive")
                hyper.join = HyperParams::Join::additive;
            else
                fail(where, "join must be 'concat' or 'additive'");
        } else {
            fail(where, "unknown key '" + key + "' in [model]");
        }
    } else if (section == "train") {
        if (key == "lr") {
            train.learning_rate = parse_real(value, where, key);
        } else if (key == "batch") {
            train.batch_size = parse_count(value, where, key);
        } else if (key == "max_epochs") {
            train.max_epochs = parse_count(value, where, key);
        } else if (key == "patience") {
            train.patience = parse_count(value, where, key);
        } else if (key == "clip") {
            train.clip = ClipSetting::parse(value);
        } else if (key == "loss_range") {
            if (value == "horizon_only")
                train.horizon_only_loss = true;
            else if (value == "full_window")
                train.horizon_only_loss = false;
            else
                fail(where,
                     "loss_range must be 'horizon_only' or 'full_window'");
        } else if (key == "seeds") {
            train.seeds = parse_seed_list(value, where);
        } else if (key == "record_timing") {
            train.record_timing = parse_bool(value, where, key);
        } else {
            fail(where, "unknown key '" + key + "' in [train]");
        }
    } else if (section == "eval") {
        if (key == "decode") {
            if (value == "analytic")
                decode.kind = DecodeMode::Kind::analytic;
            else if (value == "monte_carlo")
                decode.kind = DecodeMode::Kind::monte_carlo;
            else
                fail(where, "decode must be 'analytic' or 'monte_carlo'");
        } else if (key == "samples") {
            decode.samples = parse_count(value, where, key);
        } else if (key == "naive_period") {
            naive_period = parse_count(value, where, key);
        } else if (key == "literal_sum_nrmse") {
            literal_sum_nrmse = parse_bool(value, where, key);
        } else if (key == "split") {
            if (value != "train" && value != "val" && value != "test")
                fail(where, "split must be train, val, or test");
            eval_split = value;
        } else {
            fail(where, "unknown key '" + key + "' in [eval]");
        }
    } else if (section == "run") {
        if (key == "out_dir") {
            out_dir = value;
        } else if (key == "threads") {
            threads = parse_count(value, where, key);
        } else {
            fail(where, "unknown key '" + key + "' in [run]");
        }
    } else {
        fail(where, "unknown section [" + section + "]");
    }
}

void RunConfig::resolve() {
    if (!forward_layers_set) {
        hyper.forward_layers = hyper.layers + 1;
        forward_layers_set = true;
    }
    hyper.validate();
    dataset.validate();
    train.validate();
    if (source == "csv" && csv_path.empty())
        throw ConfigError("dataset source is csv but no path is set");
    if (decode.kind == DecodeMode::Kind::monte_carlo && decode.samples < 10)
        throw ConfigError("monte_carlo decoding needs at least 10 samples");
    if (naive_period == 0 || naive_period > dataset.t0)
        throw ConfigError("naive_period must lie in [1, t0]");
    if (threads == 0) throw ConfigError("threads must be at least 1");
}

std::string RunConfig::echo() const {
    std::ostringstream out;
    out << "[dataset]\n";
    out << "source = " << source << "\n";
    out << "kind = " << synth_kind_name(synth_kind) << "\n";
    out << "synth_series = " << synth.n_series << "\n";
    out << "synth_length = " << synth.length << "\n";
    out << "synth_noise = " << fmt17(synth.noise) << "\n";
    out << "synth_beta = " << fmt17(synth.beta) << "\n";
    out << "synth_promo_rate = " << fmt17(synth.promo_rate) << "\n";
    out << "synth_seed = " << synth_seed << "\n";
    out << "path = " << csv_path << "\n";
    out << "freq = " << frequency_name(dataset.freq) << "\n";
    out << "t0 = " << dataset.t0 << "\n";
    out << "horizon = " << dataset.horizon << "\n";
    out << "cov_length = " << dataset.cov_length << "\n";
    std::vector<std::string> four;
    for (const auto& f : dataset.fourier)
        four.push_back(f.field + ":" + fmt17(f.period));
    out << "fourier = " << join_list(four) << "\n";
    out << "covariates = " << join_list(dataset.covariate_columns) << "\n";
    out << "series_embedding = "
        << (dataset.series_embedding ? "true" : "false") << "\n";
    out << "embedding_dim = " << dataset.embedding_dim << "\n";
    out << "scale_windows = " << (dataset.scale_windows ? "true" : "false")
        << "\n";
    out << "log_transform = " << (dataset.log_transform ? "true" : "false")
        << "\n";
    out << "stride = " << dataset.stride << "\n";
    out << "eval_stride = " << dataset.eval_stride << "\n";
    out << "train_frac = " << fmt17(dataset.train_frac) << "\n";
    out << "val_frac = " << fmt17(dataset.val_frac) << "\n";
    out << "sample_cap = " << dataset.sample_cap << "\n";
    out << "\n[model]\n";
    out << "state_size = " << hyper.state_size << "\n";
    out << "layers = " << hyper.layers << "\n";
    out << "forward_layers = " << hyper.forward_layers << "\n";
    out << "kernel_size = " << hyper.kernel_size << "\n";
    out << "dropout = " << fmt17(hyper.dropout_p) << "\n";
    out << "groups = " << hyper.groups << "\n";
    out << "sigma_floor = " << fmt17(hyper.sigma_floor) << "\n";
    out << "distribution = " << family_name(hyper.distribution) << "\n";
    out << "softplus_mu = " << (hyper.softplus_mu ? "true" : "false") << "\n";
    out << "forward_module = " << (hyper.forward_module ? "true" : "false")
        << "\n";
    out << "join = "
        << (hyper.join == HyperParams::Join::concat ? "concat" : "additive")
        << "\n";
    out << "\n[train]\n";
    out << "lr = " << fmt17(train.learning_rate) << "\n";
    out << "batch = " << train.batch_size << "\n";
    out << "max_epochs = " << train.max_epochs << "\n";
    out << "patience = " << train.patience << "\n";
    out << "clip = " << train.clip.to_string() << "\n";
    out << "loss_range = "
        << (train.horizon_only_loss ? "horizon_only" : "full_window") << "\n";
    std::vector<std::string> seeds;
    for (auto s : train.seeds) seeds.push_back(std::to_string(s));
    out << "seeds = " << join_list(seeds) << "\n";
    out << "record_timing = " << (train.record_timing ? "true" : "false")
        << "\n";
    out << "\n[eval]\n";
    out << "decode = "
        << (decode.kind == DecodeMode::Kind::analytic ? "analytic"
                                                      : "monte_carlo")
        << "\n";
    out << "samples = " << decode.samples << "\n";
    out << "naive_period = " << naive_period << "\n";
    out << "literal_sum_nrmse = " << (literal_sum_nrmse ? "true" : "false")
        << "\n";
    out << "split = " << eval_split << "\n";
    out << "\n[run]\n";
    out << "out_dir = " << out_dir << "\n";
    out << "threads = " << threads << "\n";
    return out.str();
}

SeriesTable RunConfig::load_table() const {
    if (source == "synth")
        return synth_generate(synth_kind, synth, synth_seed);
    return ingest_csv(csv_path, dataset);
}

const std::vector<WindowRef>&
RunConfig::split_windows(const WindowDataset& d) const {
    if (eval_split == "train") return d.train_windows();
    if (eval_split == "val") return d.val_windows();
    return d.test_windows();
}

} // namespace bitcn
