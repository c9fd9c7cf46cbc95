#include "artgan/autodiff.hpp"

#include "artgan/errors.hpp"
#include "artgan/linalg.hpp"

#include <cmath>

namespace artgan {

const Tensor& Var::value() const
{
    if (tape == nullptr) {
        throw ContractError("use of an unbound Var");
    }
    return tape->value(id);
}

Var Tape::leaf(Tensor value)
{
    nodes_.push_back(Node{"leaf", std::move(value), {}, {}, true, true});
    return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value)
{
    nodes_.push_back(Node{"constant", std::move(value), {}, {}, false, true});
    return Var{this, nodes_.size() - 1};
}

Var Tape::record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward)
{
    Node node;
    node.op = std::move(op);
    node.value = std::move(value);
    for (const Var& in : inputs) {
        if (in.tape != this) {
            throw ContractError("operation '" + node.op + "' mixes Vars from different tapes");
        }
        if (in.id >= nodes_.size()) {
            throw ContractError("operation '" + node.op + "' references a node that does not exist yet");
        }
        node.inputs.push_back(in.id);
        node.requires_grad = node.requires_grad || nodes_[in.id].requires_grad;
    }
    if (node.requires_grad) {
        node.backward = std::move(backward);
    }
    nodes_.push_back(std::move(node));
    return Var{this, nodes_.size() - 1};
}

const Tensor& Gradients::operator[](Var leaf) const
{
    if (leaf.tape != tape_) {
        throw ContractError("gradient requested for a Var from another tape");
    }
    return at(leaf.id);
}

const Tensor& Gradients::at(std::size_t id) const
{
    if (id >= grads_.size() || grads_[id].empty()) {
        throw ContractError("no gradient recorded for node " + std::to_string(id) +
                            " (not a differentiable leaf)");
    }
    return grads_[id];
}

Gradients backward(const Tape& tape, Var loss, double seed)
{
    if (loss.tape != &tape) {
        throw ContractError("loss Var belongs to another tape");
    }
    const Tensor& loss_value = tape.value(loss.id);
    if (loss_value.size() != 1) {
        throw ContractError("backward needs a scalar loss, got shape " + shape_string(loss_value.shape()));
    }
    Gradients result;
    result.tape_ = &tape;
    result.grads_.resize(tape.size());
    for (std::size_t id = 0; id < tape.size(); ++id) {
        const auto& node = tape.nodes_[id];
        if (node.is_leaf && node.requires_grad) {
            result.grads_[id] = Tensor::zeros(node.value.shape());
        }
    }
    std::vector<Tensor>& grads = result.grads_;
    if (!tape.nodes_[loss.id].requires_grad) {
        return result;
    }
    grads[loss.id] = Tensor(loss_value.shape(), seed);

    std::vector<Tensor*> inputs;
    for (std::size_t id = loss.id + 1; id-- > 0;) {
        const auto& node = tape.nodes_[id];
        if (node.is_leaf || !node.backward || grads[id].empty()) {
            continue;
        }
        inputs.clear();
        for (std::size_t in : node.inputs) {
            const auto& src = tape.nodes_[in];
            if (!src.requires_grad) {
                inputs.push_back(nullptr);
                continue;
            }
            if (grads[in].empty()) {
                grads[in] = Tensor::zeros(src.value.shape());
            }
            inputs.push_back(&grads[in]);
        }
        node.backward(grads[id], node.value, inputs);
        // Intermediate gradients are no longer needed once propagated.
        grads[id] = Tensor();
    }
    return result;
}

namespace ops {

namespace {

Tape& tape_of(Var a)
{
    if (a.tape == nullptr) {
        throw ContractError("unbound Var");
    }
    return *a.tape;
}

enum class Broadcast { same, left_scalar, right_scalar };

Broadcast binary_layout(const Tensor& a, const Tensor& b, const char* op)
{
    if (a.shape() == b.shape()) {
        return Broadcast::same;
    }
    if (b.size() == 1) {
        return Broadcast::right_scalar;
    }
    if (a.size() == 1) {
        return Broadcast::left_scalar;
    }
    throw ShapeError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) +
                     " are neither identical nor tensor-with-scalar");
}

// Sum of g, for gradients flowing into a broadcast scalar.
double total(const Tensor& g)
{
    double s = 0.0;
    for (double v : g.data()) {
        s += v;
    }
    return s;
}

template <typename F>
Tensor map(const Tensor& a, F&& f)
{
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = f(a[i]);
    }
    return out;
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, Broadcast layout, F&& f)
{
    const Shape& shape = layout == Broadcast::left_scalar ? b.shape() : a.shape();
    Tensor out(shape);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = layout == Broadcast::left_scalar ? a[0] : a[i];
        const double y = layout == Broadcast::right_scalar ? b[0] : b[i];
        out[i] = f(x, y);
    }
    return out;
}

// Adds `contrib` into `grad`, reducing when the target was a broadcast scalar.
void accumulate(Tensor* grad, const Tensor& contrib)
{
    if (grad == nullptr) {
        return;
    }
    if (grad->size() == contrib.size()) {
        for (std::size_t i = 0; i < grad->size(); ++i) {
            (*grad)[i] += contrib[i];
        }
    } else {
        (*grad)[0] += total(contrib);
    }
}

double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x)
{
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void require_rank(const Tensor& t, std::size_t rank, const char* op)
{
    if (t.rank() != rank) {
        throw ShapeError(std::string(op) + " expects rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
    }
}

} // namespace

Var add(Var a, Var b)
{
    const Broadcast layout = binary_layout(a.value(), b.value(), "add");
    Tensor out = zip(a.value(), b.value(), layout, [](double x, double y) { return x + y; });
    return tape_of(a).record("add", std::move(out), {a, b},
                             [](const Tensor& g, const Tensor&, std::span<Tensor* const> gi) {
                                 accumulate(gi[0], g);
                                 accumulate(gi[1], g);
                             });
}

Var sub(Var a, Var b)
{
    const Broadcast layout = binary_layout(a.value(), b.value(), "sub");
    Tensor out = zip(a.value(), b.value(), layout, [](double x, double y) { return x - y; });
    return tape_of(a).record("sub", std::move(out), {a, b},
                             [](const Tensor& g, const Tensor&, std::span<Tensor* const> gi) {
                                 accumulate(gi[0], g);
                                 if (gi[1] != nullptr) {
                                     accumulate(gi[1], map(g, [](double v) { return -v; }));
                                 }
                             });
}

Var mul(Var a, Var b)
{
    const Broadcast layout = binary_layout(a.value(), b.value(), "mul");
    Tensor out = zip(a.value(), b.value(), layout, [](double x, double y) { return x * y; });
    return tape_of(a).record(
        "mul", std::move(out), {a, b}, [a, b, layout](const Tensor& g, const Tensor&, std::span<Tensor* const> gi) {
            const Tensor& av = a.value();
            const Tensor& bv = b.value();
            if (gi[0] != nullptr) {
                // d/da = g * b, with b broadcast if it is the scalar side.
                Tensor c(g.shape());
                for (std::size_t i = 0; i < g.size(); ++i) {
                    c[i] = g[i] * (layout == Broadcast::right_scalar ? bv[0] : bv[i]);
                }
                accumulate(gi[0], c);
            }
            if (gi[1] != nullptr) {
                Tensor c(g.shape());
                for (std::size_t i = 0; i < g.size(); ++i) {
                    c[i] = g[i] * (layout == Broadcast::left_scalar ? av[0] : av[i]);
                }
                accumulate(gi[1], c);
            }
        });
}

Var scale(Var a, double factor)
{
    Tensor out = map(a.value(), [factor](double x) { return x * factor; });
    return tape_of(a).record("scale", std::move(out), {a},
                             [factor](const Tensor& g, const Tensor&, std::span<Tensor* const> gi) {
                                 for (std::size_t i = 0; i < g.size(); ++i) {
                                     (*gi[0])[i] += g[i] * factor;
                                 }
                             });
}

Var add_scalar(Var a, double offset)
{
    Tensor out = map(a.value(), [offset](double x) { return x + offset; });
    return tape_of(a).record("add_scalar", std::move(out), {a},
                             [](const Tensor& g, const Tensor&, std::span<Tensor* const> gi) { accumulate(gi[0], g); });
}

Var leaky_relu(Var a, double slope)
{
    Tensor out = map(a.value(), [slope](double x) { return x > 0.0 ? x : slope * x; });
    return tape_of(a).record("leaky_relu", std::move(out), {a},
                             [a, slope](const Tensor& g, const Tensor&, std::span<Tensor* const> gi) {
                                 const Tensor& x = a.value();
                                 for (std::size_t i = 0; i < g.size(); ++i) {
                                     (*gi[0])[i] += x[i] > 0.0 ? g[i] : slope * g[i];
                                 }
                             });
}

Var softplus(Var a)
{
    Tensor out = map(a.value(), softplus_value);
    return tape_of(a).record("softplus", std::move(out), {a},
                             [a](const Tensor& g, const Tensor&, std::span<Tensor* const> gi) {
                                 const Tensor& x = a.value();
                                 for (std::size_t i = 0; i < g.size(); ++i) {
                                     (*gi[0])[i] += g[i] * sigmoid(x[i]);
                                 }
                             });
}

Var rsqrt(Var a)
{
    Tensor out = map(a.value(), [](double x) { return 1.0 / std::sqrt(x); });
    return tape_of(a).record("rsqrt", std::move(out), {a},
                             [](const Tensor& g, const Tensor& y, std::span<Tensor* const> gi) {
                                 // d(x^-1/2)/dx = -1/2 * y^3
                                 for (std::size_t i = 0; i < g.size(); ++i) {
                                     (*gi[0])[i] += g[i] * (-0.5 * y[i] * y[i] * y[i]);
                                 }
                             });
}

Var square(Var a)
{
    Tensor out = map(a.value(), [](double x) { return x * x; });
    return tape_of(a).record("square", std::move(out), {a},
                             [a](const Tensor& g, const Tensor&, std::span<Tensor* const> gi) {
                                 const Tensor& x = a.value();
                                 for (std::size_t i = 0; i < g.size(); ++i) {
                                     (*gi[0])[i] += 2.0 * x[i] * g[i];
                                 }
                             });
}

Var sum(Var a)
{
    return tape_of(a).record("sum", Tensor::scalar(total(a.value())), {a},
                             [](const Tensor& g, const Tensor&, std::span<Tensor* const> gi) {
                                 const double v = g[0];
                                 for (auto& x : gi[0]->data()) {
                                     x += v;
                                 }
                             });
}

Var mean(Var a)
{
    const double n = static_cast<double>(a.value().size());
    return tape_of(a).record("mean", Tensor::scalar(total(a.value()) / n), {a},
                             [n](const Tensor& g, const Tensor&, std::span<Tensor* const> gi) {
                                 const double v = g[0] / n;
                                 for (auto& x : gi[0]->data()) {
                                     x += v;
                                 }
                             });
}

Var elementwise(std::string_view name, std::span<const Var> inputs, double param)
{
    auto need = [&](std::size_t count) {
        if (inputs.size() != count) {
            throw ContractError("elementwise '" + std::string(name) + "' takes " + std::to_string(count) +
                                " input(s), got " + std::to_string(inputs.size()));
        }
    };
    if (name == "add") {
        need(2);
        return add(inputs[0], inputs[1]);
    }
    if (name == "sub") {
        need(2);
        return sub(inputs[0], inputs[1]);
    }
    if (name == "mul") {
        need(2);
        return mul(inputs[0], inputs[1]);
    }
    need(1);
    if (name == "scale") {
        return scale(inputs[0], param);
    }
    if (name == "leaky_relu") {
        return leaky_relu(inputs[0], param);
    }
    if (name == "softplus") {
        return softplus(inputs[0]);
    }
    if (name == "sum") {
        return sum(inputs[0]);
    }
    if (name == "mean") {
        return mean(inputs[0]);
    }
    if (name == "rsqrt") {
        return rsqrt(inputs[0]);
    }
    if (name == "square") {
        return square(inputs[0]);
    }
    throw ContractError("unknown elementwise op '" + std::string(name) + "'");
}

Var matmul(Var a, Var b)
{
    Tensor out = linalg::matmul(a.value(), b.value());
    return tape_of(a).record("matmul", std::move(out), {a, b},
                             [a, b](const Tensor& g, const Tensor&, std::span<Tensor* const> gi) {
                                 if (gi[0] != nullptr) {
                                     accumulate(gi[0], linalg::matmul(g, linalg::transpose(b.value())));
                                 }
                                 if (gi[1] != nullptr) {
                                     accumulate(gi[1], linalg::matmul(linalg::transpose(a.value()), g));
                                 }
                             });
}

Var transpose(Var a)
{
    return tape_of(a).record("transpose", linalg::transpose(a.value()), {a},
                             [](const Tensor& g, const Tensor&, std::span<Tensor* const> gi) {
                                 accumulate(gi[0], linalg::transpose(g));
                             });
}

Var reshape(Var a, Shape shape)
{
    return tape_of(a).record("reshape", a.value().reshaped(std::move(shape)), {a},
                             [](const Tensor& g, const Tensor&, std::span<Tensor* const> gi) {
                                 for (std::size_t i = 0; i < g.size(); ++i) {
                                     (*gi[0])[i] += g[i];
                                 }
                             });
}

Var sum_trailing(Var a, std::size_t count)
{
    const Shape& in = a.value().shape();
    if (count > in.size()) {
        throw ShapeError("sum_trailing over more axes than the tensor has");
    }
    Shape out_shape(in.begin(), in.end() - static_cast<long>(count));
    Shape inner_shape(in.end() - static_cast<long>(count), in.end());
    const std::size_t inner = shape_size(inner_shape);
    Tensor out(out_shape);
    const Tensor& x = a.value();
    for (std::size_t o = 0; o < out.size(); ++o) {
        double s = 0.0;
        for (std::size_t i = 0; i < inner; ++i) {
            s += x[o * inner + i];
        }
        out[o] = s;
    }
    return tape_of(a).record("sum_trailing", std::move(out), {a},
                             [inner](const Tensor& g, const Tensor&, std::span<Tensor* const> gi) {
                                 for (std::size_t o = 0; o < g.size(); ++o) {
                                     for (std::size_t i = 0; i < inner; ++i) {
                                         (*gi[0])[o * inner + i] += g[o];
                                     }
                                 }
                             });
}

Var conv2d(Var input, Var kernel, std::size_t stride, std::size_t pad)
{
    const linalg::ConvGeometry geo = linalg::conv_geometry(input.shape(), kernel.shape(), stride, pad);
    Tensor out = linalg::conv2d_forward(input.value(), kernel.value(), geo);
    return tape_of(input).record(
        "conv2d", std::move(out), {input, kernel},
        [input, kernel, geo](const Tensor& g, const Tensor&, std::span<Tensor* const> gi) {
            if (gi[0] != nullptr) {
                accumulate(gi[0], linalg::conv2d_backward_input(g, kernel.value(), geo));
            }
            if (gi[1] != nullptr) {
                accumulate(gi[1], linalg::conv2d_backward_kernel(g, input.value(), geo));
            }
        });
}

Var scale_channels(Var x, Var s)
{
    const Tensor& xv = x.value();
    const Tensor& sv = s.value();
    if (xv.rank() < 2 || sv.rank() != 2 || sv.dim(0) != xv.dim(0) || sv.dim(1) != xv.dim(1)) {
        throw ShapeError("scale_channels: x " + shape_string(xv.shape()) + " vs s " + shape_string(sv.shape()));
    }
    const std::size_t groups = sv.size();
    const std::size_t inner = xv.size() / groups;
    Tensor out(xv.shape());
    for (std::size_t gidx = 0; gidx < groups; ++gidx) {
        const double f = sv[gidx];
        for (std::size_t i = 0; i < inner; ++i) {
            out[gidx * inner + i] = xv[gidx * inner + i] * f;
        }
    }
    return tape_of(x).record("scale_channels", std::move(out), {x, s},
                             [x, s, groups, inner](const Tensor& g, const Tensor&, std::span<Tensor* const> gi) {
                                 const Tensor& xv = x.value();
                                 const Tensor& sv = s.value();
                                 for (std::size_t gidx = 0; gidx < groups; ++gidx) {
                                     double ds = 0.0;
                                     for (std::size_t i = 0; i < inner; ++i) {
                                         const std::size_t k = gidx * inner + i;
                                         if (gi[0] != nullptr) {
                                             (*gi[0])[k] += g[k] * sv[gidx];
                                         }
                                         ds += g[k] * xv[k];
                                     }
                                     if (gi[1] != nullptr) {
                                         (*gi[1])[gidx] += ds;
                                     }
                                 }
                             });
}

Var add_channel_bias(Var x, Var bias)
{
    const Tensor& xv = x.value();
    const Tensor& bv = bias.value();
    if (xv.rank() < 2 || bv.rank() != 1 || bv.dim(0) != xv.dim(1)) {
        throw ShapeError("add_channel_bias: x " + shape_string(xv.shape()) + " vs bias " +
                         shape_string(bv.shape()));
    }
    const std::size_t batch = xv.dim(0), channels = xv.dim(1);
    const std::size_t inner = xv.size() / (batch * channels);
    Tensor out(xv.shape());
    for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t base = (n * channels + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
                out[base + i] = xv[base + i] + bv[c];
            }
        }
    }
    return tape_of(x).record("add_channel_bias", std::move(out), {x, bias},
                             [batch, channels, inner](const Tensor& g, const Tensor&, std::span<Tensor* const> gi) {
                                 accumulate(gi[0], g);
                                 if (gi[1] == nullptr) {
                                     return;
                                 }
                                 for (std::size_t n = 0; n < batch; ++n) {
                                     for (std::size_t c = 0; c < channels; ++c) {
                                         const std::size_t base = (n * channels + c) * inner;
                                         double s = 0.0;
                                         for (std::size_t i = 0; i < inner; ++i) {
                                             s += g[base + i];
                                         }
                                         (*gi[1])[c] += s;
                                     }
                                 }
                             });
}

Var add_scaled_noise(Var x, Var noise, Var strength)
{
    const Tensor& xv = x.value();
    const Tensor& nv = noise.value();
    require_rank(xv, 4, "add_scaled_noise");
    if (nv.rank() != 4 || nv.dim(0) != xv.dim(0) || nv.dim(1) != 1 || nv.dim(2) != xv.dim(2) ||
        nv.dim(3) != xv.dim(3) || strength.value().size() != 1) {
        throw ShapeError("add_scaled_noise: x " + shape_string(xv.shape()) + ", noise " +
                         shape_string(nv.shape()) + ", strength " + shape_string(strength.shape()));
    }
    const std::size_t batch = xv.dim(0), channels = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
    const double k = strength.value()[0];
    Tensor out(xv.shape());
    for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t c = 0; c < channels; ++c) {
            for (std::size_t p = 0; p < plane; ++p) {
                const std::size_t idx = (n * channels + c) * plane + p;
                out[idx] = xv[idx] + k * nv[n * plane + p];
            }
        }
    }
    return tape_of(x).record(
        "add_scaled_noise", std::move(out), {x, noise, strength},
        [noise, strength, batch, channels, plane](const Tensor& g, const Tensor&, std::span<Tensor* const> gi) {
            accumulate(gi[0], g);
            const Tensor& nv = noise.value();
            const double k = strength.value()[0];
            double ds = 0.0;
            for (std::size_t n = 0; n < batch; ++n) {
                for (std::size_t c = 0; c < channels; ++c) {
                    for (std::size_t p = 0; p < plane; ++p) {
                        const double gv = g[(n * channels + c) * plane + p];
                        ds += gv * nv[n * plane + p];
                        if (gi[1] != nullptr) {
                            (*gi[1])[n * plane + p] += gv * k;
                        }
                    }
                }
            }
            if (gi[2] != nullptr) {
                (*gi[2])[0] += ds;
            }
        });
}

Var upsample2x(Var x)
{
    const Tensor& xv = x.value();
    require_rank(xv, 4, "upsample2x");
    const std::size_t planes = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    Tensor out({xv.dim(0), xv.dim(1), 2 * h, 2 * w});
    for (std::size_t p = 0; p < planes; ++p) {
        const double* src = xv.ptr() + p * h * w;
        double* dst = out.ptr() + p * 4 * h * w;
        for (std::size_t i = 0; i < 2 * h; ++i) {
            for (std::size_t j = 0; j < 2 * w; ++j) {
                dst[i * 2 * w + j] = src[(i / 2) * w + j / 2];
            }
        }
    }
    return tape_of(x).record("upsample2x", std::move(out), {x},
                             [planes, h, w](const Tensor& g, const Tensor&, std::span<Tensor* const> gi) {
                                 for (std::size_t p = 0; p < planes; ++p) {
                                     const double* src = g.ptr() + p * 4 * h * w;
                                     double* dst = gi[0]->ptr() + p * h * w;
                                     for (std::size_t i = 0; i < 2 * h; ++i) {
                                         for (std::size_t j = 0; j < 2 * w; ++j) {
                                             dst[(i / 2) * w + j / 2] += src[i * 2 * w + j];
                                         }
                                     }
                                 }
                             });
}

Var downsample2x(Var x)
{
    const Tensor& xv = x.value();
    require_rank(xv, 4, "downsample2x");
    const std::size_t planes = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    if (h % 2 != 0 || w % 2 != 0) {
        throw ShapeError("downsample2x needs even spatial size, got " + shape_string(xv.shape()));
    }
    const std::size_t oh = h / 2, ow = w / 2;
    Tensor out({xv.dim(0), xv.dim(1), oh, ow});
    for (std::size_t p = 0; p < planes; ++p) {
        const double* src = xv.ptr() + p * h * w;
        double* dst = out.ptr() + p * oh * ow;
        for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
                const double* s = src + 2 * i * w + 2 * j;
                dst[i * ow + j] = 0.25 * ((s[0] + s[1]) + (s[w] + s[w + 1]));
            }
        }
    }
    return tape_of(x).record("downsample2x", std::move(out), {x},
                             [planes, h, w, oh, ow](const Tensor& g, const Tensor&, std::span<Tensor* const> gi) {
                                 for (std::size_t p = 0; p < planes; ++p) {
                                     const double* src = g.ptr() + p * oh * ow;
                                     double* dst = gi[0]->ptr() + p * h * w;
                                     for (std::size_t i = 0; i < oh; ++i) {
                                         for (std::size_t j = 0; j < ow; ++j) {
                                             const double v = 0.25 * src[i * ow + j];
                                             double* d = dst + 2 * i * w + 2 * j;
                                             d[0] += v;
                                             d[1] += v;
                                             d[w] += v;
                                             d[w + 1] += v;
                                         }
                                     }
                                 }
                             });
}

Var normalize_rms_rows(Var x, double eps)
{
    const Tensor& xv = x.value();
    require_rank(xv, 2, "normalize_rms_rows");
    const std::size_t rows = xv.dim(0), cols = xv.dim(1);
    std::vector<double> inv(rows);
    Tensor out(xv.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        double ms = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            ms += xv(r, c) * xv(r, c);
        }
        ms /= static_cast<double>(cols);
        inv[r] = 1.0 / std::sqrt(ms + eps);
        for (std::size_t c = 0; c < cols; ++c) {
            out(r, c) = xv(r, c) * inv[r];
        }
    }
    return tape_of(x).record("normalize_rms_rows", std::move(out), {x},
                             [x, inv, rows, cols](const Tensor& g, const Tensor&, std::span<Tensor* const> gi) {
                                 // y = x * r, r = (mean(x^2) + eps)^-1/2
                                 // dx = r * g - x * r^3 * <g, x> / D
                                 const Tensor& xv = x.value();
                                 for (std::size_t r = 0; r < rows; ++r) {
                                     double dot = 0.0;
                                     for (std::size_t c = 0; c < cols; ++c) {
                                         dot += g(r, c) * xv(r, c);
                                     }
                                     const double k = inv[r] * inv[r] * inv[r] * dot / static_cast<double>(cols);
                                     for (std::size_t c = 0; c < cols; ++c) {
                                         (*gi[0])(r, c) += inv[r] * g(r, c) - xv(r, c) * k;
                                     }
                                 }
                             });
}

} // namespace ops

} // namespace artgan
