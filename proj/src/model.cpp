#include "bitcn/model.hpp"

#include <cmath>
#include <string>

namespace bitcn {

void HyperParams::validate() const {
    if (state_size == 0) throw ShapeError("state_size must be positive");
    if (layers == 0) throw ShapeError("layers must be positive");
    if (forward_module && forward_layers == 0)
        throw ShapeError("forward_layers must be positive");
    if (kernel_size == 0) throw ShapeError("kernel_size must be positive");
    if (dropout_p < 0.0 || dropout_p >= 1.0)
        throw ShapeError("dropout must lie in [0, 1)");
    if (groups == 0) throw ShapeError("groups must be positive");
    if (!(sigma_floor > 0.0))
        throw ShapeError("sigma_floor must be strictly positive");
}

std::size_t HyperParams::effective_groups() const {
    // Largest divisor of the channel count not exceeding the requested
    // group count, so grouped convs always partition the channels evenly.
    std::size_t g = groups < state_size ? groups : state_size;
    while (g > 1 && state_size % g != 0) --g;
    return g;
}

std::size_t ModelDims::emb_total() const {
    std::size_t n = 0;
    for (std::size_t e : cat_emb) n += e;
    return n;
}

// ---- temporal block ----

BlockOut temporal_block_forward(const Tensor& x, const TemporalBlockParams& p,
                                bool training, Rng* rng) {
    const std::size_t d_h = p.conv.in_channels;
    Tensor w = weight_norm(p.conv_v, p.conv_g, WeightNormAxis::per_row);
    Tensor c = dilated_conv(x, p.conv, w, p.conv_b);
    Tensor a = dropout(gelu(c), p.dropout_p, training, rng);
    Tensor wd = weight_norm(p.dense_v, p.dense_g, WeightNormAxis::per_column);
    Tensor z = affine(a, wd, p.dense_b);
    Tensor h_raw = slice_channels(z, 0, d_h);
    Tensor o = slice_channels(z, d_h, d_h);
    return {add(x, h_raw), o};
}

Tensor stack_forward(const Tensor& x,
                     const std::vector<TemporalBlockParams>& blocks,
                     bool training, Rng* rng) {
    if (blocks.empty()) throw ShapeError("stack_forward: no blocks");
    Tensor h = x;
    Tensor skip_sum;
    for (const auto& b : blocks) {
        BlockOut out = temporal_block_forward(h, b, training, rng);
        h = out.hidden;
        skip_sum = skip_sum.defined() ? add(skip_sum, out.skip) : out.skip;
    }
    return skip_sum;
}

// ---- model ----

BiTCNModel::BiTCNModel(HyperParams hp, ModelDims dims, std::uint64_t init_seed)
    : hp_(hp), dims_(std::move(dims)), init_seed_(init_seed) {
    hp_.validate();
    if (dims_.lag_dim == 0) throw ShapeError("lag_dim must be positive");
    if (dims_.cat_vocab.size() != dims_.cat_emb.size())
        throw ShapeError("cat_vocab and cat_emb must have equal length");
    for (std::size_t v : dims_.cat_vocab)
        if (v == 0) throw ShapeError("categorical vocabulary must be nonempty");
    for (std::size_t e : dims_.cat_emb)
        if (e == 0) throw ShapeError("embedding dims must be positive");
    if (hp_.forward_module && dims_.cov_dim + dims_.emb_total() == 0)
        throw ShapeError(
            "the anticausal module needs at least one covariate channel");
    init_params();
}

Tensor BiTCNModel::register_param(const std::string& name, Shape shape) {
    Tensor t = Tensor::zeros(shape, true);
    params_.emplace_back(name, t);
    return t;
}

namespace {

void fill_normal(Tensor t, Rng& rng, double sd) {
    for (double& v : t.values_mut()) v = rng.normal(0.0, sd);
}

// g starts at the norm of its unit so the initial effective weight equals v.
void init_gain_rows(Tensor v, Tensor g) {
    const std::size_t units = v.dim(0);
    const std::size_t fan = v.size() / units;
    const auto& vv = v.values();
    auto& gv = g.values_mut();
    for (std::size_t u = 0; u < units; ++u) {
        double s = 0.0;
        for (std::size_t i = 0; i < fan; ++i) {
            const double e = vv[u * fan + i];
            s += e * e;
        }
        gv[u] = std::sqrt(s);
    }
}

void init_gain_columns(Tensor v, Tensor g) {
    const std::size_t units = v.shape().back();
    const std::size_t fan = v.size() / units;
    const auto& vv = v.values();
    auto& gv = g.values_mut();
    for (std::size_t u = 0; u < units; ++u) {
        double s = 0.0;
        for (std::size_t i = 0; i < fan; ++i) {
            const double e = vv[i * units + u];
            s += e * e;
        }
        gv[u] = std::sqrt(s);
    }
}

} // namespace

void BiTCNModel::init_params() {
    Rng rng(init_seed_);
    const std::size_t d_h = hp_.state_size;

    for (std::size_t c = 0; c < dims_.cat_vocab.size(); ++c) {
        Tensor table = register_param("embed." + std::to_string(c),
                                      {dims_.cat_vocab[c], dims_.cat_emb[c]});
        fill_normal(table, rng, 0.01);
        embed_.push_back(table);
    }

    const std::size_t lag_in =
        dims_.lag_dim + dims_.cov_dim + dims_.emb_total();
    proj_lag_w_ = register_param("proj_lag.w", {lag_in, d_h});
    fill_normal(proj_lag_w_, rng, std::sqrt(2.0 / double(lag_in)));
    proj_lag_b_ = register_param("proj_lag.b", {d_h});

    auto make_blocks = [&](const std::string& prefix,
                           ConvSpec::Direction dir, std::size_t depth,
                           std::size_t groups) {
        std::vector<TemporalBlockParams> blocks;
        for (std::size_t i = 1; i <= depth; ++i) {
            TemporalBlockParams b;
            b.conv.in_channels = d_h;
            b.conv.out_channels = 4 * d_h;
            b.conv.kernel = hp_.kernel_size;
            b.conv.dilation = std::size_t{1} << (i - 1);
            b.conv.groups = groups;
            b.conv.direction = dir;
            b.dropout_p = hp_.dropout_p;

            const std::string base = prefix + "." + std::to_string(i);
            const std::size_t icg = d_h / groups;
            b.conv_v = register_param(base + ".conv.v",
                                      {4 * d_h, icg, hp_.kernel_size});
            fill_normal(b.conv_v, rng,
                        std::sqrt(2.0 / double(icg * hp_.kernel_size)));
            b.conv_g = register_param(base + ".conv.g", {4 * d_h});
            init_gain_rows(b.conv_v, b.conv_g);
            b.conv_b = register_param(base + ".conv.b", {4 * d_h});

            b.dense_v = register_param(base + ".dense.v", {4 * d_h, 2 * d_h});
            fill_normal(b.dense_v, rng, std::sqrt(2.0 / double(4 * d_h)));
            b.dense_g = register_param(base + ".dense.g", {2 * d_h});
            init_gain_columns(b.dense_v, b.dense_g);
            b.dense_b = register_param(base + ".dense.b", {2 * d_h});
            blocks.push_back(std::move(b));
        }
        return blocks;
    };

    bwd_ = make_blocks("bwd", ConvSpec::Direction::backward, hp_.layers, 1);

    if (hp_.forward_module) {
        const std::size_t cov_in = dims_.cov_dim + dims_.emb_total();
        proj_cov_w_ = register_param("proj_cov.w", {cov_in, d_h});
        fill_normal(proj_cov_w_, rng, std::sqrt(2.0 / double(cov_in)));
        proj_cov_b_ = register_param("proj_cov.b", {d_h});
        fwd_ = make_blocks("fwd", ConvSpec::Direction::forward,
                           hp_.forward_layers, hp_.effective_groups());
    }

    const std::size_t join_dim =
        hp_.forward_module
            ? (hp_.join == HyperParams::Join::concat ? 2 * d_h : d_h)
            : d_h;
    head_mu_w_ = register_param("head_mu.w", {join_dim, 1});
    fill_normal(head_mu_w_, rng, std::sqrt(2.0 / double(join_dim)));
    head_mu_b_ = register_param("head_mu.b", {1});
    head_sigma_w_ = register_param("head_sigma.w", {join_dim, 1});
    fill_normal(head_sigma_w_, rng, std::sqrt(2.0 / double(join_dim)));
    head_sigma_b_ = register_param("head_sigma.b", {1});
}

BiTCNModel::Output BiTCNModel::forward(const Tensor& y_lag,
                                       const Tensor& a_cov,
                                       const IndexTensor& a_cat, bool training,
                                       Rng* rng) const {
    if (!y_lag.defined() || y_lag.rank() != 3)
        throw ShapeError("forward: y_lag must be (T, batch, lag_dim)");
    const std::size_t T = y_lag.dim(0);
    const std::size_t B = y_lag.dim(1);
    if (y_lag.dim(2) != dims_.lag_dim)
        throw ShapeError("forward: y_lag channel width mismatch");

    std::size_t Tc = T;
    if (dims_.cov_dim > 0) {
        if (!a_cov.defined() || a_cov.rank() != 3)
            throw ShapeError("forward: a_cov must be (T_c, batch, cov_dim)");
        if (a_cov.dim(1) != B || a_cov.dim(2) != dims_.cov_dim)
            throw ShapeError("forward: a_cov dims mismatch");
        Tc = a_cov.dim(0);
    } else if (a_cov.defined()) {
        throw ShapeError("forward: model was built without covariates");
    }

    const std::size_t ncat = dims_.cat_vocab.size();
    if (ncat > 0) {
        if (a_cat.shape.size() != 3 || a_cat.shape[1] != B ||
            a_cat.shape[2] != ncat)
            throw ShapeError("forward: a_cat must be (T_c, batch, n_cat)");
        if (dims_.cov_dim > 0) {
            if (a_cat.shape[0] != Tc)
                throw ShapeError("forward: a_cat/a_cov time extents differ");
        } else {
            Tc = a_cat.shape[0];
        }
    }
    if (Tc < T)
        throw ShapeError("forward: covariate window shorter than target window");
    if (!all_finite(y_lag) || (a_cov.defined() && !all_finite(a_cov)))
        throw NumericError("forward: non-finite values in model inputs");

    // Per-categorical embedding lookups, concatenated channelwise.
    Tensor a_emb;
    if (ncat > 0) {
        std::vector<Tensor> embs;
        for (std::size_t c = 0; c < ncat; ++c) {
            std::vector<std::int64_t> ids(Tc * B);
            for (std::size_t i = 0; i < Tc * B; ++i)
                ids[i] = a_cat.ids[i * ncat + c];
            embs.push_back(embedding_lookup(
                IndexTensor::of({Tc, B}, std::move(ids)), embed_[c]));
        }
        a_emb = concat_channels(embs);
    }

    Tensor x_lag = concat_channels(
        {y_lag,
         a_cov.defined() ? slice_time(a_cov, 0, T) : Tensor{},
         a_emb.defined() ? slice_time(a_emb, 0, T) : Tensor{}});
    Tensor h_lag = dropout(affine(x_lag, proj_lag_w_, proj_lag_b_),
                           hp_.dropout_p, training, rng);
    Tensor o_lag = stack_forward(h_lag, bwd_, training, rng);

    Tensor o;
    if (hp_.forward_module) {
        Tensor x_cov = concat_channels({a_cov, a_emb});
        Tensor h_cov = dropout(affine(x_cov, proj_cov_w_, proj_cov_b_),
                               hp_.dropout_p, training, rng);
        Tensor o_cov = stack_forward(h_cov, fwd_, training, rng);
        Tensor o_cov_t = slice_time(o_cov, 0, T);
        o = hp_.join == HyperParams::Join::concat
                ? concat_channels({o_cov_t, o_lag})
                : add(o_cov_t, o_lag);
    } else {
        o = o_lag;
    }

    Tensor mu_pre = affine(o, head_mu_w_, head_mu_b_);
    Tensor mu = hp_.softplus_mu ? softplus(mu_pre) : mu_pre;
    Tensor sigma = add_scalar(softplus(affine(o, head_sigma_w_, head_sigma_b_)),
                              hp_.sigma_floor);

    if (!all_finite(mu) || !all_finite(sigma))
        throw NumericError("forward: non-finite values at the output heads");
    return {mu, sigma};
}

Tensor BiTCNModel::param(const std::string& name) const {
    for (const auto& [n, t] : params_)
        if (n == name) return t;
    throw ShapeError("unknown parameter '" + name + "'");
}

std::size_t BiTCNModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.size();
    return n;
}

void BiTCNModel::zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
}

std::vector<std::vector<double>> BiTCNModel::snapshot() const {
    std::vector<std::vector<double>> snap;
    snap.reserve(params_.size());
    for (const auto& [name, t] : params_) snap.push_back(t.values());
    return snap;
}

void BiTCNModel::restore(const std::vector<std::vector<double>>& snap) {
    if (snap.size() != params_.size())
        throw ShapeError("restore: snapshot does not match parameter registry");
    for (std::size_t i = 0; i < snap.size(); ++i) {
        if (snap[i].size() != params_[i].second.size())
            throw ShapeError("restore: parameter size mismatch at '" +
                             params_[i].first + "'");
        params_[i].second.values_mut() = snap[i];
    }
}

void check_dims_compatible(const ModelDims& model_dims,
                           const ModelDims& data_dims) {
    auto fail = [](const std::string& field, std::size_t want,
                   std::size_t got) {
        throw DataError("checkpoint incompatible with dataset: " + field +
                        " is " + std::to_string(want) +
                        " in the checkpoint but " + std::to_string(got) +
                        " in the data");
    };
    if (model_dims.lag_dim != data_dims.lag_dim)
        fail("lag_dim", model_dims.lag_dim, data_dims.lag_dim);
    if (model_dims.cov_dim != data_dims.cov_dim)
        fail("cov_dim", model_dims.cov_dim, data_dims.cov_dim);
    if (model_dims.cat_vocab.size() != data_dims.cat_vocab.size())
        fail("categorical count", model_dims.cat_vocab.size(),
             data_dims.cat_vocab.size());
    for (std::size_t i = 0; i < model_dims.cat_vocab.size(); ++i)
        if (model_dims.cat_vocab[i] != data_dims.cat_vocab[i])
            fail("cat_vocab[" + std::to_string(i) + "]",
                 model_dims.cat_vocab[i], data_dims.cat_vocab[i]);
}

} // namespace bitcn
