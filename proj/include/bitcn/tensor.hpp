#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "bitcn/errors.hpp"
#include "bitcn/rng.hpp"

namespace bitcn {

using Shape = std::vector<std::size_t>;

namespace detail {
struct TensorImpl;
}

// Dense 64-bit float tensor with an optional reverse-mode autodiff record.
// A Tensor is a shared handle: copies alias the same storage and graph node.
// Gradients accumulate across backward() calls until zero_grad().
class Tensor {
public:
    Tensor() = default; // undefined handle

    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor full(const Shape& shape, double value,
                       bool requires_grad = false);
    static Tensor of(const Shape& shape, std::vector<double> values,
                     bool requires_grad = false);
    static Tensor scalar_value(double v);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t size() const;
    std::size_t dim(std::size_t i) const { return shape().at(i); }

    const std::vector<double>& values() const;
    // Mutable access to raw storage; legitimate only on leaves (parameters,
    // input staging) outside an active graph.
    std::vector<double>& values_mut();
    double at(std::size_t flat) const { return values().at(flat); }
    double scalar() const;

    bool requires_grad() const;
    void set_requires_grad(bool rg);
    bool has_grad() const;
    const std::vector<double>& grad() const;
    std::vector<double>& grad_mut();
    void zero_grad();

    std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
        : impl_(std::move(impl)) {}

private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

// Integer id tensor for categorical features. Not differentiable and never
// part of the graph.
struct IndexTensor {
    Shape shape;
    std::vector<std::int64_t> ids;

    std::size_t size() const { return ids.size(); }
    static IndexTensor of(const Shape& shape, std::vector<std::int64_t> ids);
};

// Dilated convolution geometry. direction picks which way the taps reach:
// backward (causal) taps x[t - d*j], forward (anticausal) taps x[t + d*j].
struct ConvSpec {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel = 1;
    std::size_t dilation = 1;
    std::size_t groups = 1;
    enum class Direction { backward, forward };
    Direction direction = Direction::backward;

    void validate() const;
};

enum class WeightNormAxis {
    per_row,    // v: (units, fan...) - one norm per leading row
    per_column, // v: (fan, units)   - one norm per trailing column
    whole       // v: any shape       - a single norm over every element
};

// While a NoGradGuard is alive no graph nodes are recorded; forward passes
// produce plain value tensors. Guards nest.
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};
bool grad_enabled();

// Ops. All inputs are (time, batch, channels) row-major where a time axis
// is involved; affine treats every leading axis as a row dimension.
Tensor dilated_conv(const Tensor& x, const ConvSpec& spec,
                    const Tensor& weights, const Tensor& bias);
Tensor gelu(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor dropout(const Tensor& x, double p, bool training, Rng* rng);
Tensor embedding_lookup(const IndexTensor& ids, const Tensor& table);
Tensor weight_norm(const Tensor& v, const Tensor& g, WeightNormAxis axis);
Tensor slice_time(const Tensor& x, std::size_t start, std::size_t len);
Tensor slice_channels(const Tensor& x, std::size_t start, std::size_t len);
Tensor concat_channels(const std::vector<Tensor>& parts);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);
Tensor sum(const Tensor& x); // scalar

// Reverse-mode sweep from a scalar loss. Nodes replay in reverse insertion
// order; gradients accumulate into every reachable tensor with
// requires_grad. A NaN appearing in any node's upstream gradient raises
// NumericError naming the op.
void backward(const Tensor& loss);

// True if every value (and gradient, when present) is finite.
bool all_finite(const Tensor& t);

// Plain-text dump/load for fixtures: "shape: d0 d1 ...\nvalues: v0 v1 ...".
std::string to_text(const Tensor& t);
Tensor from_text(const std::string& text);

namespace detail {

// Builds an op node: allocates the output, wires parents, and registers the
// backward closure (only when grads are enabled and some parent needs them).
// The closure receives the node's upstream gradient and must accumulate into
// the parents via accumulate().
Tensor make_op(const char* op, Shape shape, std::vector<double> values,
               std::vector<Tensor> parents,
               std::function<void(const std::vector<double>&)> backward_fn);

// Adds delta into t's gradient storage (allocating zeros on first use).
void accumulate(const Tensor& t, const double* delta, std::size_t n);

} // namespace detail

} // namespace bitcn
