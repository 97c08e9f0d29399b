#include "bitcn/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

#include "bitcn/distributions.hpp"
#include "bitcn/errors.hpp"

namespace bitcn {

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

// ---- clip policy ----

ClipSetting ClipSetting::parse(const std::string& text) {
    ClipSetting c;
    if (text == "auto") {
        c.mode = Mode::automatic;
    } else if (text == "none" || text == "off") {
        c.mode = Mode::none;
    } else {
        try {
            std::size_t used = 0;
            const double v = std::stod(text, &used);
            if (used != text.size() || !(v > 0.0))
                throw std::invalid_argument(text);
            c.mode = Mode::fixed;
            c.max_norm = v;
        } catch (const std::exception&) {
            throw ConfigError("clip must be 'auto', 'none', or a positive "
                              "number; got '" +
                              text + "'");
        }
    }
    return c;
}

std::string ClipSetting::to_string() const {
    switch (mode) {
    case Mode::automatic: return "auto";
    case Mode::none: return "none";
    case Mode::fixed: return fmt17(max_norm);
    }
    return "?";
}

double ClipSetting::resolve(Family f) const {
    switch (mode) {
    case Mode::automatic: return f == Family::gaussian ? max_norm : 0.0;
    case Mode::none: return 0.0;
    case Mode::fixed: return max_norm;
    }
    return 0.0;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0))
        throw ConfigError("learning_rate must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
    if (patience == 0) throw ConfigError("patience must be at least 1");
    if (seeds.empty()) throw ConfigError("seed list must not be empty");
    if (clip.mode == ClipSetting::Mode::fixed && !(clip.max_norm > 0.0))
        throw ConfigError("clip norm must be positive");
}

// ---- optimizer ----

void AdamState::init(const BiTCNModel& model) {
    step = 0;
    m.clear();
    v.clear();
    for (const auto& [name, p] : model.parameters()) {
        m.emplace_back(p.size(), 0.0);
        v.emplace_back(p.size(), 0.0);
    }
}

void adam_step(BiTCNModel& model, AdamState& state, double lr) {
    const auto& params = model.parameters();
    if (!state.initialized()) state.init(model);
    if (state.m.size() != params.size())
        throw ShapeError("adam_step: state does not match the model");

    for (const auto& [name, p] : params) {
        if (!p.has_grad()) continue;
        for (double g : p.grad())
            if (std::isnan(g))
                throw NumericError("NaN gradient in parameter '" + name +
                                   "'");
    }

    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor p = params[i].second;
        std::vector<double>& m = state.m[i];
        std::vector<double>& v = state.v[i];
        if (m.size() != p.size())
            throw ShapeError("adam_step: moment shape mismatch for '" +
                             params[i].first + "'");
        const std::vector<double>* gp = p.has_grad() ? &p.grad() : nullptr;
        std::vector<double>& w = p.values_mut();
        for (std::size_t j = 0; j < m.size(); ++j) {
            const double g = gp ? (*gp)[j] : 0.0;
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            w[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

double global_grad_norm(const BiTCNModel& model) {
    double ss = 0.0;
    for (const auto& [name, p] : model.parameters()) {
        if (!p.has_grad()) continue;
        for (double g : p.grad()) ss += g * g;
    }
    return std::sqrt(ss);
}

double clip_gradients(BiTCNModel& model, double max_norm) {
    if (!(max_norm > 0.0))
        throw ConfigError("clip_gradients: max_norm must be positive");
    const double norm = global_grad_norm(model);
    if (norm <= max_norm) return 1.0;
    const double scale = max_norm / norm;
    for (const auto& [name, handle] : model.parameters()) {
        Tensor p = handle;
        if (!p.has_grad()) continue;
        for (double& g : p.grad_mut()) g *= scale;
    }
    return scale;
}

// ---- early stopping ----

bool EarlyStopper::update(double val_loss, std::size_t epoch) {
    if (best_epoch == 0 || val_loss < best) {
        best = val_loss;
        best_epoch = epoch;
        bad_epochs = 0;
        return true;
    }
    ++bad_epochs;
    return false;
}

// ---- run records ----

std::string RunRecord::to_text() const {
    std::string out;
    out += "seed " + std::to_string(seed) + "\n";
    out += "lr " + fmt17(learning_rate) + "\n";
    out += "batch " + std::to_string(batch_size) + "\n";
    for (const auto& e : epochs) {
        char sec[32];
        std::snprintf(sec, sizeof sec, "%.3f", e.seconds);
        out += "epoch " + std::to_string(e.epoch) + " train_nll " +
               fmt17(e.train_nll) + " val_nll " + fmt17(e.val_nll) +
               " seconds " + sec + "\n";
    }
    out += "stopped_epoch " + std::to_string(stopped_epoch) + "\n";
    out += "best_epoch " + std::to_string(best_epoch) + "\n";
    out += "best_val_nll " + fmt17(best_val_nll) + "\n";
    out += "diverged " + std::string(diverged ? "1" : "0");
    if (diverged) out += " " + divergence_reason;
    out += "\n";
    if (!checkpoint.empty()) out += "checkpoint " + checkpoint + "\n";
    return out;
}

// ---- loss evaluation ----

namespace {

Tensor batch_loss(const BiTCNModel& model, const WindowBatch& batch,
                  const DatasetConfig& dc, bool horizon_only, bool training,
                  Rng* rng) {
    const auto out = model.forward(batch.y_lag, batch.a_cov, batch.a_cat,
                                   training, rng);
    Tensor mu = out.mu, sigma = out.sigma, target = batch.y_target;
    if (horizon_only) {
        mu = slice_time(mu, dc.t0, dc.horizon);
        sigma = slice_time(sigma, dc.t0, dc.horizon);
        target = slice_time(target, dc.t0, dc.horizon);
    }
    return dist::nll(model.hyper().distribution, target, mu, sigma);
}

} // namespace

double evaluate_nll(const BiTCNModel& model, const WindowDataset& data,
                    const std::vector<WindowRef>& refs,
                    std::size_t batch_size, bool horizon_only) {
    if (refs.empty()) throw DataError("evaluate_nll: no windows");
    if (batch_size == 0) throw ConfigError("evaluate_nll: batch_size is 0");
    NoGradGuard guard;
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t from = 0; from < refs.size(); from += batch_size) {
        const std::size_t n = std::min(batch_size, refs.size() - from);
        const WindowBatch batch = data.make_batch(refs.data() + from, n);
        const Tensor loss = batch_loss(model, batch, data.config(),
                                       horizon_only, false, nullptr);
        total += loss.scalar() * static_cast<double>(n);
        count += n;
    }
    return total / static_cast<double>(count);
}

// ---- training loop ----

RunRecord train(BiTCNModel& model, const WindowDataset& data,
                const TrainConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const auto& dc = data.config();
    const auto& train_refs = data.train_windows();
    if (train_refs.empty()) throw DataError("train: no training windows");

    RunRecord rec;
    rec.seed = seed;
    rec.learning_rate = cfg.learning_rate;
    rec.batch_size = cfg.batch_size;

    Rng dropout_rng(Rng::derive(seed, "dropout"));
    AdamState opt;
    opt.init(model);
    EarlyStopper stopper;
    stopper.patience = cfg.patience;
    std::vector<std::vector<double>> best_snap;
    const double clip_norm = cfg.clip.resolve(model.hyper().distribution);

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto t_start = std::chrono::steady_clock::now();

        std::vector<WindowRef> refs = train_refs;
        Rng shuffle_rng(Rng::derive(seed, "shuffle", epoch));
        shuffle_rng.shuffle(refs);
        if (refs.size() > dc.sample_cap) refs.resize(dc.sample_cap);

        double train_total = 0.0;
        std::size_t train_count = 0;
        try {
            for (std::size_t from = 0; from < refs.size();
                 from += cfg.batch_size) {
                const std::size_t n =
                    std::min(cfg.batch_size, refs.size() - from);
                const WindowBatch batch =
                    data.make_batch(refs.data() + from, n);
                model.zero_grad();
                const Tensor loss =
                    batch_loss(model, batch, dc, cfg.horizon_only_loss, true,
                               &dropout_rng);
                const double value = loss.scalar();
                if (!std::isfinite(value))
                    throw NumericError("non-finite training loss " +
                                       fmt17(value));
                backward(loss);
                if (clip_norm > 0.0) clip_gradients(model, clip_norm);
                adam_step(model, opt, cfg.learning_rate);
                train_total += value * static_cast<double>(n);
                train_count += n;
            }
        } catch (const NumericError& e) {
            rec.diverged = true;
            rec.divergence_reason = std::string(e.what()) + " (epoch " +
                                    std::to_string(epoch) + ", after " +
                                    std::to_string(train_count) +
                                    " windows)";
            break;
        }
        const double train_nll =
            train_total / static_cast<double>(train_count);

        double val_nll;
        if (data.val_windows().empty()) {
            val_nll = train_nll; // no validation stream; stop on train NLL
        } else {
            val_nll = evaluate_nll(model, data, data.val_windows(),
                                   cfg.batch_size, cfg.horizon_only_loss);
        }

        EpochRecord er;
        er.epoch = epoch;
        er.train_nll = train_nll;
        er.val_nll = val_nll;
        if (cfg.record_timing) {
            const auto t_end = std::chrono::steady_clock::now();
            er.seconds =
                std::chrono::duration<double>(t_end - t_start).count();
        }
        rec.epochs.push_back(er);

        if (stopper.update(val_nll, epoch)) best_snap = model.snapshot();
        if (stopper.should_stop()) break;
    }

    if (!best_snap.empty()) model.restore(best_snap);
    rec.stopped_epoch = rec.epochs.size();
    rec.best_epoch = stopper.best_epoch;
    rec.best_val_nll = stopper.best_epoch ? stopper.best
                                          : std::numeric_limits<double>::quiet_NaN();
    return rec;
}

// ---- grid search ----

std::string GridResult::to_text() const {
    std::string out;
    for (const auto& c : cells) {
        out += "cell lr " + fmt17(c.learning_rate) + " batch " +
               std::to_string(c.batch_size);
        if (c.usable)
            out += " mean_val_nll " + fmt17(c.mean_val_nll);
        else
            out += " mean_val_nll nan";
        out += " runs_ok " + std::to_string(c.val_nlls.size()) + "/" +
               std::to_string(c.runs.size()) + "\n";
    }
    if (!cells.empty()) {
        const GridCell& b = cells[best_cell];
        out += "best lr " + fmt17(b.learning_rate) + " batch " +
               std::to_string(b.batch_size) + "\n";
    }
    return out;
}

GridResult grid_search(const HyperParams& hp, const WindowDataset& data,
                       const TrainConfig& base, const GridSpec& grid) {
    if (grid.learning_rates.empty() || grid.batch_sizes.empty())
        throw ConfigError("grid_search: empty grid");
    base.validate();

    GridResult result;
    for (double lr : grid.learning_rates) {
        for (std::size_t bs : grid.batch_sizes) {
            GridCell cell;
            cell.learning_rate = lr;
            cell.batch_size = bs;
            TrainConfig cfg = base;
            cfg.learning_rate = lr;
            cfg.batch_size = bs;
            for (std::uint64_t seed : base.seeds) {
                BiTCNModel model(hp, data.model_dims(),
                                 Rng::derive(seed, "init"));
                RunRecord run = train(model, data, cfg, seed);
                if (!run.diverged) cell.val_nlls.push_back(run.best_val_nll);
                cell.runs.push_back(std::move(run));
            }
            cell.usable = !cell.val_nlls.empty();
            if (cell.usable) {
                double s = 0.0;
                for (double v : cell.val_nlls) s += v;
                cell.mean_val_nll = s / double(cell.val_nlls.size());
            } else {
                cell.mean_val_nll = std::numeric_limits<double>::quiet_NaN();
            }
            result.cells.push_back(std::move(cell));
        }
    }

    bool found = false;
    for (std::size_t i = 0; i < result.cells.size(); ++i) {
        const GridCell& c = result.cells[i];
        if (!c.usable) continue;
        if (!found) {
            result.best_cell = i;
            found = true;
            continue;
        }
        const GridCell& b = result.cells[result.best_cell];
        const bool better =
            c.mean_val_nll < b.mean_val_nll ||
            (c.mean_val_nll == b.mean_val_nll &&
             (c.learning_rate < b.learning_rate ||
              (c.learning_rate == b.learning_rate &&
               c.batch_size < b.batch_size)));
        if (better) result.best_cell = i;
    }
    if (!found) throw DataError("grid_search: every cell diverged");
    return result;
}

} // namespace bitcn
