#pragma once

#include "artgan/tensor.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace artgan {

class Tape;
class Gradients;

/// Handle to a node on a tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
};

/// Receives the gradient of the node's output (and the output value itself)
/// and adds contributions into the gradient buffers of its inputs. A null
/// buffer means that input needs none.
using BackwardFn =
    std::function<void(const Tensor& grad_out, const Tensor& out, std::span<Tensor* const> grad_in)>;

/// Append-only record of a forward computation. Inputs of every node refer to
/// strictly earlier nodes, so the tape is topologically ordered by
/// construction. Single writer; do not record from several threads at once.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Differentiable leaf (parameter or input).
    Var leaf(Tensor value);
    /// Non-differentiable value.
    Var constant(Tensor value);
    /// Record an operation; backward is dropped if no input needs a gradient.
    Var record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

    const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
    const std::string& op(std::size_t id) const { return nodes_.at(id).op; }
    const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }
    bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
    bool is_leaf(std::size_t id) const { return nodes_.at(id).is_leaf; }
    std::size_t size() const noexcept { return nodes_.size(); }

private:
    friend class Gradients;
    friend Gradients backward(const Tape& tape, Var loss, double seed);

    struct Node {
        std::string op;
        Tensor value;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        bool requires_grad = false;
        bool is_leaf = false;
    };
    std::vector<Node> nodes_;
};

/// Gradients of a scalar loss with respect to the differentiable leaves of a
/// tape. Leaves the loss does not depend on report zeros of their own shape.
class Gradients {
public:
    const Tensor& operator[](Var leaf) const;
    const Tensor& at(std::size_t id) const;

private:
    friend Gradients backward(const Tape& tape, Var loss, double seed);
    const Tape* tape_ = nullptr;
    std::vector<Tensor> grads_;
};

/// Reverse sweep from a scalar loss; `seed` scales the loss gradient.
Gradients backward(const Tape& tape, Var loss, double seed = 1.0);

namespace ops {

constexpr double kDefaultLeakySlope = 0.2;

// Pointwise. Binary ops accept identical shapes or one single-element operand.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
Var leaky_relu(Var a, double slope = kDefaultLeakySlope);
Var softplus(Var a);
Var rsqrt(Var a);
Var square(Var a);
Var sum(Var a);
Var mean(Var a);

/// Name-dispatched form of the pointwise ops above: add, sub, mul, scale,
/// leaky_relu, softplus, sum, mean, rsqrt, square. `param` is the factor for
/// scale and the slope for leaky_relu.
Var elementwise(std::string_view name, std::span<const Var> inputs, double param = 0.0);

// Linear algebra and layout.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, Shape shape);
/// Sum over the trailing `count` axes.
Var sum_trailing(Var a, std::size_t count);

/// Cross-correlation with zero padding. input N x C x H x W, kernel F x C x kh x kw.
Var conv2d(Var input, Var kernel, std::size_t stride = 1, std::size_t pad = 0);

/// x[N, C, ...] * s[N, C] broadcast over the trailing spatial axes.
Var scale_channels(Var x, Var s);
/// x[N, C, ...] + b[C].
Var add_channel_bias(Var x, Var bias);
/// x[N, C, H, W] + strength * noise[N, 1, H, W]; strength is single-element.
Var add_scaled_noise(Var x, Var noise, Var strength);
/// Nearest-neighbour x2 on N x C x H x W.
Var upsample2x(Var x);
/// 2x2 area average on N x C x H x W (H, W even).
Var downsample2x(Var x);
/// Each row of x[N, D] divided by sqrt(mean(row^2) + eps).
Var normalize_rms_rows(Var x, double eps = 1e-8);

} // namespace ops

} // namespace artgan
