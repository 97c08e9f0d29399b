#include "bitcn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <unordered_set>

#include "bitcn/kernels.hpp"

namespace bitcn {

namespace detail {

struct TensorImpl {
    Shape shape;
    std::vector<double> values;
    bool requires_grad = false;
    std::vector<double> grad;

    // Graph record; seq is the insertion index, 0 for leaves.
    std::uint64_t seq = 0;
    const char* op = "";
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void(const std::vector<double>&)> backward_fn;
};

namespace {

thread_local std::uint64_t g_seq_counter = 0;
thread_local int g_no_grad_depth = 0;

std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

void check_defined(const Tensor& t, const char* what) {
    if (!t.defined()) throw ShapeError(std::string(what) + ": undefined tensor");
}

} // namespace

Tensor make_op(const char* op, Shape shape, std::vector<double> values,
               std::vector<Tensor> parents,
               std::function<void(const std::vector<double>&)> backward_fn) {
    auto impl = std::make_shared<TensorImpl>();
    if (values.size() != shape_size(shape))
        throw ShapeError(std::string(op) + ": value count does not match shape");
    impl->shape = std::move(shape);
    impl->values = std::move(values);
    impl->op = op;

    bool need = grad_enabled();
    if (need) {
        need = false;
        for (const Tensor& p : parents)
            if (p.defined() && p.requires_grad()) need = true;
    }
    if (need) {
        impl->requires_grad = true;
        impl->seq = ++g_seq_counter;
        for (const Tensor& p : parents)
            if (p.defined()) impl->parents.push_back(p.impl());
        impl->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(impl));
}

void accumulate(const Tensor& t, const double* delta, std::size_t n) {
    auto impl = t.impl();
    if (!impl || !impl->requires_grad) return;
    if (impl->grad.empty()) impl->grad.assign(impl->values.size(), 0.0);
    if (impl->grad.size() != n)
        throw ShapeError("gradient size mismatch during accumulation");
    for (std::size_t i = 0; i < n; ++i) impl->grad[i] += delta[i];
}

} // namespace detail

using detail::TensorImpl;

// ---- Tensor handle ----

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
    return of(shape, std::vector<double>(detail::shape_size(shape), 0.0),
              requires_grad);
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
    return of(shape, std::vector<double>(detail::shape_size(shape), value),
              requires_grad);
}

Tensor Tensor::of(const Shape& shape, std::vector<double> values,
                  bool requires_grad) {
    for (std::size_t d : shape)
        if (d == 0) throw ShapeError("tensor dimensions must be positive");
    if (values.size() != detail::shape_size(shape))
        throw ShapeError("value count does not match shape");
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = shape;
    impl->values = std::move(values);
    impl->requires_grad = requires_grad;
    impl->op = "leaf";
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar_value(double v) { return of({1}, {v}); }

const Shape& Tensor::shape() const {
    if (!impl_) throw ShapeError("shape(): undefined tensor");
    return impl_->shape;
}

std::size_t Tensor::size() const {
    if (!impl_) return 0;
    return impl_->values.size();
}

const std::vector<double>& Tensor::values() const {
    if (!impl_) throw ShapeError("values(): undefined tensor");
    return impl_->values;
}

std::vector<double>& Tensor::values_mut() {
    if (!impl_) throw ShapeError("values_mut(): undefined tensor");
    return impl_->values;
}

double Tensor::scalar() const {
    if (size() != 1) throw ShapeError("scalar(): tensor is not a scalar");
    return impl_->values[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool rg) {
    if (!impl_) throw ShapeError("set_requires_grad(): undefined tensor");
    impl_->requires_grad = rg;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
    static const std::vector<double> empty;
    if (!impl_ || impl_->grad.empty()) return empty;
    return impl_->grad;
}

std::vector<double>& Tensor::grad_mut() {
    detail::check_defined(*this, "grad_mut");
    if (impl_->grad.empty())
        throw ShapeError("grad_mut: tensor has no gradient");
    return impl_->grad;
}

void Tensor::zero_grad() {
    if (impl_) impl_->grad.clear();
}

IndexTensor IndexTensor::of(const Shape& shape,
                            std::vector<std::int64_t> ids) {
    if (ids.size() != detail::shape_size(shape))
        throw ShapeError("id count does not match shape");
    return IndexTensor{shape, std::move(ids)};
}

// ---- grad mode ----

NoGradGuard::NoGradGuard() { ++detail::g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --detail::g_no_grad_depth; }
bool grad_enabled() { return detail::g_no_grad_depth == 0; }

// ---- backward ----

void backward(const Tensor& loss) {
    detail::check_defined(loss, "backward");
    if (loss.size() != 1)
        throw ShapeError("backward: loss must be a scalar tensor");
    auto root = loss.impl();
    if (!root->requires_grad) return;

    // Collect every recorded ancestor node once.
    std::vector<TensorImpl*> nodes;
    std::unordered_set<TensorImpl*> seen;
    std::vector<TensorImpl*> stack{root.get()};
    seen.insert(root.get());
    while (!stack.empty()) {
        TensorImpl* n = stack.back();
        stack.pop_back();
        if (n->backward_fn) nodes.push_back(n);
        for (auto& p : n->parents) {
            if (p->requires_grad && seen.insert(p.get()).second)
                stack.push_back(p.get());
        }
    }
    // Reverse insertion order visits every node after all its consumers.
    std::sort(nodes.begin(), nodes.end(),
              [](TensorImpl* a, TensorImpl* b) { return a->seq > b->seq; });

    if (root->grad.empty()) root->grad.assign(1, 0.0);
    root->grad[0] += 1.0;

    for (TensorImpl* n : nodes) {
        if (n->grad.empty()) continue; // no consumer contributed
        for (double g : n->grad) {
            if (std::isnan(g))
                throw NumericError(std::string("NaN gradient at node '") +
                                   n->op + "' (seq " +
                                   std::to_string(n->seq) + ")");
        }
        n->backward_fn(n->grad);
    }
}

bool all_finite(const Tensor& t) {
    if (!t.defined()) return true;
    for (double v : t.values())
        if (!std::isfinite(v)) return false;
    for (double g : t.grad())
        if (!std::isfinite(g)) return false;
    return true;
}

// ---- ops ----

void ConvSpec::validate() const {
    if (in_channels == 0 || out_channels == 0 || kernel == 0 || dilation == 0 ||
        groups == 0)
        throw ShapeError("dilated_conv: spec fields must be positive");
    if (in_channels % groups != 0 || out_channels % groups != 0)
        throw ShapeError("dilated_conv: groups must divide both channel counts");
}

Tensor dilated_conv(const Tensor& x, const ConvSpec& spec,
                    const Tensor& weights, const Tensor& bias) {
    detail::check_defined(x, "dilated_conv");
    detail::check_defined(weights, "dilated_conv");
    detail::check_defined(bias, "dilated_conv");
    spec.validate();
    if (x.rank() != 3)
        throw ShapeError("dilated_conv: input must be (time, batch, channels)");
    if (x.dim(2) != spec.in_channels)
        throw ShapeError("dilated_conv: input channel mismatch");
    const std::size_t icg = spec.in_channels / spec.groups;
    if (weights.shape() != Shape{spec.out_channels, icg, spec.kernel})
        throw ShapeError("dilated_conv: weights must be (out, in/groups, k)");
    if (bias.shape() != Shape{spec.out_channels})
        throw ShapeError("dilated_conv: bias must be (out)");

    kernels::ConvDims cd;
    cd.time = x.dim(0);
    cd.batch = x.dim(1);
    cd.in_ch = spec.in_channels;
    cd.out_ch = spec.out_channels;
    cd.kernel = spec.kernel;
    cd.dilation = spec.dilation;
    cd.groups = spec.groups;
    cd.forward_dir = spec.direction == ConvSpec::Direction::forward;

    Shape out_shape{cd.time, cd.batch, cd.out_ch};
    std::vector<double> out(cd.time * cd.batch * cd.out_ch);
    kernels::conv_forward(x.values().data(), weights.values().data(),
                          bias.values().data(), out.data(), cd);

    return detail::make_op(
        "dilated_conv", std::move(out_shape), std::move(out),
        {x, weights, bias},
        [x, weights, bias, cd](const std::vector<double>& dy) {
            if (x.requires_grad()) {
                std::vector<double> dx(x.size());
                kernels::conv_grad_input(dy.data(), weights.values().data(),
                                         dx.data(), cd);
                detail::accumulate(x, dx.data(), dx.size());
            }
            if (weights.requires_grad() || bias.requires_grad()) {
                std::vector<double> dw(weights.size());
                std::vector<double> db(bias.size());
                kernels::conv_grad_weights(dy.data(), x.values().data(),
                                           dw.data(), db.data(), cd);
                detail::accumulate(weights, dw.data(), dw.size());
                detail::accumulate(bias, db.data(), db.size());
            }
        });
}

Tensor gelu(const Tensor& x) {
    detail::check_defined(x, "gelu");
    std::vector<double> out(x.size());
    kernels::gelu_forward(x.values().data(), out.data(), out.size());
    return detail::make_op("gelu", x.shape(), std::move(out), {x},
                           [x](const std::vector<double>& dy) {
                               std::vector<double> dx(x.size());
                               kernels::gelu_backward(x.values().data(),
                                                      dy.data(), dx.data(),
                                                      dx.size());
                               detail::accumulate(x, dx.data(), dx.size());
                           });
}

namespace {

double softplus_scalar(double v) {
    if (v > 30.0) return v;        // log1p(exp(v)) - v < 1e-13 here
    if (v < -30.0) return std::exp(v);
    return std::log1p(std::exp(v));
}

double sigmoid_scalar(double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

} // namespace

Tensor softplus(const Tensor& x) {
    detail::check_defined(x, "softplus");
    std::vector<double> out(x.size());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = softplus_scalar(xv[i]);
    return detail::make_op(
        "softplus", x.shape(), std::move(out), {x},
        [x](const std::vector<double>& dy) {
            std::vector<double> dx(x.size());
            const auto& xv = x.values();
            for (std::size_t i = 0; i < dx.size(); ++i)
                dx[i] = dy[i] * sigmoid_scalar(xv[i]);
            detail::accumulate(x, dx.data(), dx.size());
        });
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
    detail::check_defined(x, "affine");
    detail::check_defined(w, "affine");
    detail::check_defined(b, "affine");
    if (w.rank() != 2) throw ShapeError("affine: weights must be (in, out)");
    if (x.rank() < 1 || x.shape().back() != w.dim(0))
        throw ShapeError("affine: trailing input dim must match weight rows");
    if (b.shape() != Shape{w.dim(1)})
        throw ShapeError("affine: bias must be (out)");

    const std::size_t in = w.dim(0), out_ch = w.dim(1);
    const std::size_t rows = x.size() / in;
    Shape out_shape = x.shape();
    out_shape.back() = out_ch;
    std::vector<double> out(rows * out_ch);
    kernels::affine_forward(x.values().data(), w.values().data(),
                            b.values().data(), out.data(), rows, in, out_ch);

    return detail::make_op(
        "affine", std::move(out_shape), std::move(out), {x, w, b},
        [x, w, b, rows, in, out_ch](const std::vector<double>& dy) {
            if (x.requires_grad()) {
                std::vector<double> dx(x.size());
                kernels::affine_grad_input(dy.data(), w.values().data(),
                                           dx.data(), rows, in, out_ch);
                detail::accumulate(x, dx.data(), dx.size());
            }
            if (w.requires_grad() || b.requires_grad()) {
                std::vector<double> dw(w.size());
                std::vector<double> db(b.size());
                kernels::affine_grad_weights(dy.data(), x.values().data(),
                                             dw.data(), db.data(), rows, in,
                                             out_ch);
                detail::accumulate(w, dw.data(), dw.size());
                detail::accumulate(b, db.data(), db.size());
            }
        });
}

Tensor dropout(const Tensor& x, double p, bool training, Rng* rng) {
    detail::check_defined(x, "dropout");
    if (p < 0.0 || p >= 1.0)
        throw ShapeError("dropout: p must lie in [0, 1)");
    if (!training || p == 0.0) return x;
    if (!rng) throw ShapeError("dropout: training mode needs an rng");

    // Inverted dropout: kept units are scaled by 1/(1-p) so the expected
    // value of the output matches the input.
    const double scale = 1.0 / (1.0 - p);
    std::vector<double> mask(x.size());
    for (double& m : mask) m = rng->uniform() < p ? 0.0 : scale;

    const auto& xv = x.values();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];

    return detail::make_op(
        "dropout", x.shape(), std::move(out), {x},
        [x, mask = std::move(mask)](const std::vector<double>& dy) {
            std::vector<double> dx(x.size());
            for (std::size_t i = 0; i < dx.size(); ++i)
                dx[i] = dy[i] * mask[i];
            detail::accumulate(x, dx.data(), dx.size());
        });
}

Tensor embedding_lookup(const IndexTensor& ids, const Tensor& table) {
    detail::check_defined(table, "embedding_lookup");
    if (table.rank() != 2)
        throw ShapeError("embedding_lookup: table must be (vocab, dim)");
    const std::size_t vocab = table.dim(0), dim = table.dim(1);

    Shape out_shape = ids.shape;
    out_shape.push_back(dim);
    std::vector<double> out(ids.size() * dim);
    const auto& tv = table.values();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const std::int64_t id = ids.ids[i];
        if (id < 0 || static_cast<std::size_t>(id) >= vocab)
            throw DataError("embedding_lookup: categorical id " +
                            std::to_string(id) +
                            " is out of vocabulary (size " +
                            std::to_string(vocab) + ")");
        std::copy_n(tv.data() + static_cast<std::size_t>(id) * dim, dim,
                    out.data() + i * dim);
    }

    std::vector<std::int64_t> idv = ids.ids;
    return detail::make_op(
        "embedding_lookup", std::move(out_shape), std::move(out), {table},
        [table, idv = std::move(idv), dim](const std::vector<double>& dy) {
            std::vector<double> dt(table.size(), 0.0);
            for (std::size_t i = 0; i < idv.size(); ++i) {
                double* row =
                    dt.data() + static_cast<std::size_t>(idv[i]) * dim;
                const double* g = dy.data() + i * dim;
                for (std::size_t c = 0; c < dim; ++c) row[c] += g[c];
            }
            detail::accumulate(table, dt.data(), dt.size());
        });
}

namespace {

// Unit decomposition for weight normalization: `units` norm groups, each a
// strided slice of v. per_row slices are contiguous; per_column slices
// stride by the unit count.
struct WnLayout {
    std::size_t units, fan, stride, unit_step;
};

WnLayout wn_layout(const Tensor& v, WeightNormAxis axis) {
    const std::size_t n = v.size();
    switch (axis) {
    case WeightNormAxis::per_row: {
        const std::size_t units = v.dim(0);
        return {units, n / units, 1, n / units};
    }
    case WeightNormAxis::per_column: {
        const std::size_t units = v.shape().back();
        return {units, n / units, units, 1};
    }
    case WeightNormAxis::whole:
        return {1, n, 1, 0};
    }
    throw ShapeError("weight_norm: bad axis");
}

} // namespace

Tensor weight_norm(const Tensor& v, const Tensor& g, WeightNormAxis axis) {
    detail::check_defined(v, "weight_norm");
    detail::check_defined(g, "weight_norm");
    const WnLayout lo = wn_layout(v, axis);
    if (g.shape() != Shape{lo.units})
        throw ShapeError("weight_norm: gain must have one entry per unit");

    const auto& vv = v.values();
    const auto& gv = g.values();
    std::vector<double> norms(lo.units);
    for (std::size_t u = 0; u < lo.units; ++u) {
        double s = 0.0;
        for (std::size_t i = 0; i < lo.fan; ++i) {
            const double e = vv[u * lo.unit_step + i * lo.stride];
            s += e * e;
        }
        const double n = std::sqrt(s);
        if (n == 0.0)
            throw NumericError(
                "weight_norm: zero-norm direction vector (unit " +
                std::to_string(u) + ")");
        norms[u] = n;
    }

    std::vector<double> out(v.size());
    for (std::size_t u = 0; u < lo.units; ++u) {
        const double scale = gv[u] / norms[u];
        for (std::size_t i = 0; i < lo.fan; ++i) {
            const std::size_t idx = u * lo.unit_step + i * lo.stride;
            out[idx] = scale * vv[idx];
        }
    }

    return detail::make_op(
        "weight_norm", v.shape(), std::move(out), {v, g},
        [v, g, lo, norms = std::move(norms)](const std::vector<double>& dy) {
            const auto& vv = v.values();
            const auto& gv = g.values();
            std::vector<double> dv(v.size(), 0.0);
            std::vector<double> dg(lo.units, 0.0);
            for (std::size_t u = 0; u < lo.units; ++u) {
                const double n = norms[u];
                double dot = 0.0; // dy . v within the unit
                for (std::size_t i = 0; i < lo.fan; ++i) {
                    const std::size_t idx = u * lo.unit_step + i * lo.stride;
                    dot += dy[idx] * vv[idx];
                }
                dg[u] = dot / n;
                const double a = gv[u] / n;
                const double b = gv[u] * dot / (n * n * n);
                for (std::size_t i = 0; i < lo.fan; ++i) {
                    const std::size_t idx = u * lo.unit_step + i * lo.stride;
                    dv[idx] = a * dy[idx] - b * vv[idx];
                }
            }
            detail::accumulate(v, dv.data(), dv.size());
            detail::accumulate(g, dg.data(), dg.size());
        });
}

Tensor slice_time(const Tensor& x, std::size_t start, std::size_t len) {
    detail::check_defined(x, "slice_time");
    if (x.rank() < 1) throw ShapeError("slice_time: rank must be >= 1");
    const std::size_t T = x.dim(0);
    if (len == 0 || start + len > T)
        throw ShapeError("slice_time: range [" + std::to_string(start) + ", " +
                         std::to_string(start + len) +
                         ") exceeds time extent " + std::to_string(T));
    const std::size_t row = x.size() / T;
    Shape out_shape = x.shape();
    out_shape[0] = len;
    std::vector<double> out(len * row);
    std::copy_n(x.values().data() + start * row, len * row, out.data());

    return detail::make_op(
        "slice_time", std::move(out_shape), std::move(out), {x},
        [x, start, len, row](const std::vector<double>& dy) {
            std::vector<double> dx(x.size(), 0.0);
            std::copy_n(dy.data(), len * row, dx.data() + start * row);
            detail::accumulate(x, dx.data(), dx.size());
        });
}

Tensor slice_channels(const Tensor& x, std::size_t start, std::size_t len) {
    detail::check_defined(x, "slice_channels");
    if (x.rank() < 1) throw ShapeError("slice_channels: rank must be >= 1");
    const std::size_t C = x.shape().back();
    if (len == 0 || start + len > C)
        throw ShapeError("slice_channels: range exceeds channel extent " +
                         std::to_string(C));
    const std::size_t rows = x.size() / C;
    Shape out_shape = x.shape();
    out_shape.back() = len;
    std::vector<double> out(rows * len);
    const auto& xv = x.values();
    for (std::size_t r = 0; r < rows; ++r)
        std::copy_n(xv.data() + r * C + start, len, out.data() + r * len);

    return detail::make_op(
        "slice_channels", std::move(out_shape), std::move(out), {x},
        [x, start, len, rows, C](const std::vector<double>& dy) {
            std::vector<double> dx(x.size(), 0.0);
            for (std::size_t r = 0; r < rows; ++r)
                std::copy_n(dy.data() + r * len, len,
                            dx.data() + r * C + start);
            detail::accumulate(x, dx.data(), dx.size());
        });
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
    // Undefined handles act as empty inputs and vanish from the result.
    std::vector<Tensor> live;
    for (const Tensor& p : parts)
        if (p.defined()) live.push_back(p);
    if (live.empty()) throw ShapeError("concat_channels: no inputs");
    if (live.size() == 1) return live[0];

    const Shape& lead = live[0].shape();
    std::size_t total = 0;
    for (const Tensor& p : live) {
        if (p.rank() != lead.size())
            throw ShapeError("concat_channels: rank mismatch");
        for (std::size_t i = 0; i + 1 < lead.size(); ++i)
            if (p.dim(i) != lead[i])
                throw ShapeError("concat_channels: leading dims must match");
        total += p.shape().back();
    }
    Shape out_shape = lead;
    out_shape.back() = total;
    const std::size_t rows = live[0].size() / lead.back();

    std::vector<double> out(rows * total);
    std::size_t off = 0;
    for (const Tensor& p : live) {
        const std::size_t c = p.shape().back();
        const auto& pv = p.values();
        for (std::size_t r = 0; r < rows; ++r)
            std::copy_n(pv.data() + r * c, c, out.data() + r * total + off);
        off += c;
    }

    return detail::make_op(
        "concat_channels", std::move(out_shape), std::move(out), live,
        [live, rows, total](const std::vector<double>& dy) {
            std::size_t off = 0;
            for (const Tensor& p : live) {
                const std::size_t c = p.shape().back();
                if (p.requires_grad()) {
                    std::vector<double> dp(p.size());
                    for (std::size_t r = 0; r < rows; ++r)
                        std::copy_n(dy.data() + r * total + off, c,
                                    dp.data() + r * c);
                    detail::accumulate(p, dp.data(), dp.size());
                }
                off += c;
            }
        });
}

Tensor add(const Tensor& a, const Tensor& b) {
    detail::check_defined(a, "add");
    detail::check_defined(b, "add");
    if (a.shape() != b.shape()) throw ShapeError("add: shape mismatch");
    std::vector<double> out(a.size());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return detail::make_op("add", a.shape(), std::move(out), {a, b},
                           [a, b](const std::vector<double>& dy) {
                               detail::accumulate(a, dy.data(), dy.size());
                               detail::accumulate(b, dy.data(), dy.size());
                           });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    detail::check_defined(a, "mul");
    detail::check_defined(b, "mul");
    if (a.shape() != b.shape()) throw ShapeError("mul: shape mismatch");
    std::vector<double> out(a.size());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return detail::make_op(
        "mul", a.shape(), std::move(out), {a, b},
        [a, b](const std::vector<double>& dy) {
            if (a.requires_grad()) {
                std::vector<double> da(a.size());
                const auto& bv = b.values();
                for (std::size_t i = 0; i < da.size(); ++i)
                    da[i] = dy[i] * bv[i];
                detail::accumulate(a, da.data(), da.size());
            }
            if (b.requires_grad()) {
                std::vector<double> db(b.size());
                const auto& av = a.values();
                for (std::size_t i = 0; i < db.size(); ++i)
                    db[i] = dy[i] * av[i];
                detail::accumulate(b, db.data(), db.size());
            }
        });
}

Tensor add_scalar(const Tensor& x, double c) {
    detail::check_defined(x, "add_scalar");
    std::vector<double> out(x.size());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + c;
    return detail::make_op("add_scalar", x.shape(), std::move(out), {x},
                           [x](const std::vector<double>& dy) {
                               detail::accumulate(x, dy.data(), dy.size());
                           });
}

Tensor mul_scalar(const Tensor& x, double c) {
    detail::check_defined(x, "mul_scalar");
    std::vector<double> out(x.size());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * c;
    return detail::make_op(
        "mul_scalar", x.shape(), std::move(out), {x},
        [x, c](const std::vector<double>& dy) {
            std::vector<double> dx(x.size());
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = dy[i] * c;
            detail::accumulate(x, dx.data(), dx.size());
        });
}

Tensor sum(const Tensor& x) {
    detail::check_defined(x, "sum");
    double s = 0.0;
    for (double v : x.values()) s += v;
    return detail::make_op(
        "sum", {1}, {s}, {x}, [x](const std::vector<double>& dy) {
            std::vector<double> dx(x.size(), dy[0]);
            detail::accumulate(x, dx.data(), dx.size());
        });
}

// ---- text fixtures ----

std::string to_text(const Tensor& t) {
    detail::check_defined(t, "to_text");
    std::ostringstream os;
    os << "shape:";
    for (std::size_t d : t.shape()) os << ' ' << d;
    os << "\nvalues:";
    char buf[40];
    for (double v : t.values()) {
        std::snprintf(buf, sizeof buf, " %.17g", v);
        os << buf;
    }
    os << '\n';
    return os.str();
}

Tensor from_text(const std::string& text) {
    std::istringstream is(text);
    std::string tag;
    is >> tag;
    if (tag != "shape:") throw DataError("from_text: expected 'shape:'");
    Shape shape;
    std::string tok;
    while (is >> tok) {
        if (tok == "values:") break;
        try {
            shape.push_back(static_cast<std::size_t>(std::stoull(tok)));
        } catch (const std::exception&) {
            throw DataError("from_text: bad dimension '" + tok + "'");
        }
    }
    if (tok != "values:") throw DataError("from_text: expected 'values:'");
    std::vector<double> values;
    double v;
    while (is >> v) values.push_back(v);
    return Tensor::of(shape, std::move(values));
}

} // namespace bitcn
