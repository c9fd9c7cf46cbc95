#include "artgan/autodiff.hpp"
#include "artgan/errors.hpp"
#include "artgan/grad_check.hpp"
#include "artgan/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <map>

using namespace artgan;
namespace o = artgan::ops;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0)
{
    Tensor t(std::move(shape));
    for (auto& v : t.data()) {
        v = scale * rng.normal();
    }
    return t;
}

// Pushes every coordinate at least `gap` away from zero so leaky_relu kinks
// stay outside the finite-difference stencil.
Tensor away_from_zero(Tensor t, double gap)
{
    for (auto& v : t.data()) {
        v = v >= 0 ? v + gap : v - gap;
    }
    return t;
}

// Independent nested-loop cross-correlation.
Tensor conv_oracle(const Tensor& x, const Tensor& k, std::size_t stride, std::size_t pad)
{
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t f = k.dim(0), kh = k.dim(2), kw = k.dim(3);
    const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (w + 2 * pad - kw) / stride + 1;
    Tensor out({n, f, oh, ow});
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ff = 0; ff < f; ++ff)
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j) {
                    double acc = 0.0;
                    for (std::size_t cc = 0; cc < c; ++cc)
                        for (std::size_t u = 0; u < kh; ++u)
                            for (std::size_t v = 0; v < kw; ++v) {
                                const long y = long(i * stride + u) - long(pad);
                                const long xx = long(j * stride + v) - long(pad);
                                if (y < 0 || xx < 0 || y >= long(h) || xx >= long(w)) continue;
                                acc += x(b, cc, std::size_t(y), std::size_t(xx)) * k(ff, cc, u, v);
                            }
                    out(b, ff, i, j) = acc;
                }
    return out;
}

} // namespace

TEST_CASE("matmul examples")
{
    Tape tape;
    SUBCASE("identity on the left returns the right operand")
    {
        Tensor eye({3, 3});
        for (std::size_t i = 0; i < 3; ++i) eye(i, i) = 1.0;
        Tensor b({3, 2}, {1, 2, 3, 4, 5, 6});
        CHECK(o::matmul(tape.constant(eye), tape.constant(b)).value() == b);
    }
    SUBCASE("2x2 product against the triple loop")
    {
        Tensor a({2, 2}, {1, 2, 3, 4});
        Tensor b({2, 2}, {5, 6, 7, 8});
        Tensor expected({2, 2});
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 2; ++j)
                for (std::size_t p = 0; p < 2; ++p) expected(i, j) += a(i, p) * b(p, j);
        CHECK(expected == Tensor({2, 2}, {19, 22, 43, 50}));
        CHECK(o::matmul(tape.constant(a), tape.constant(b)).value() == expected);
    }
    SUBCASE("shape arithmetic")
    {
        auto c = o::matmul(tape.constant(Tensor({4, 3})), tape.constant(Tensor({3, 5})));
        CHECK(c.shape() == Shape{4, 5});
    }
    SUBCASE("inner dimension mismatch")
    {
        CHECK_THROWS_AS(o::matmul(tape.constant(Tensor({4, 3})), tape.constant(Tensor({4, 5}))), ShapeError);
    }
}

TEST_CASE("conv2d examples")
{
    Rng rng(2);
    Tape tape;
    SUBCASE("same-padding shape")
    {
        auto y = o::conv2d(tape.constant(Tensor({1, 3, 8, 8})), tape.constant(Tensor({4, 3, 3, 3})), 1, 1);
        CHECK(y.shape() == Shape{1, 4, 8, 8});
    }
    SUBCASE("center impulse kernel is the identity")
    {
        Tensor x = random_tensor(rng, {1, 1, 6, 7});
        Tensor k({1, 1, 3, 3});
        k(0, 0, 1, 1) = 1.0;
        auto y = o::conv2d(tape.constant(x), tape.constant(k), 1, 1);
        CHECK(max_abs_diff(y.value(), x) <= 1e-12);
    }
    SUBCASE("random input matches the nested-loop oracle")
    {
        Tensor x = random_tensor(rng, {1, 2, 5, 5});
        Tensor k = random_tensor(rng, {3, 2, 3, 3});
        for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 0}, {1, 1}, {2, 1}}) {
            auto y = o::conv2d(tape.constant(x), tape.constant(k), stride, pad);
            CHECK(max_abs_diff(y.value(), conv_oracle(x, k, stride, pad)) <= 1e-12);
        }
    }
    SUBCASE("pointwise kernel matches the oracle")
    {
        Tensor x = random_tensor(rng, {2, 4, 3, 3});
        Tensor k = random_tensor(rng, {5, 4, 1, 1});
        auto y = o::conv2d(tape.constant(x), tape.constant(k));
        CHECK(max_abs_diff(y.value(), conv_oracle(x, k, 1, 0)) <= 1e-12);
    }
    SUBCASE("channel mismatch")
    {
        CHECK_THROWS_AS(o::conv2d(tape.constant(Tensor({1, 3, 8, 8})), tape.constant(Tensor({4, 2, 3, 3}))),
                        ShapeError);
    }
}

TEST_CASE("elementwise examples")
{
    Tape tape;
    CHECK(o::softplus(tape.constant(Tensor::scalar(0.0))).value().item() == doctest::Approx(std::log(2.0)));
    CHECK(o::leaky_relu(tape.constant(Tensor::scalar(-2.0)), 0.2).value().item() == doctest::Approx(-0.4));
    CHECK(o::sum(tape.constant(Tensor::ones({2, 3}))).value().item() == 6.0);
    CHECK(o::mean(tape.constant(Tensor::ones({2, 3}))).value().item() == 1.0);

    const Var x = tape.constant(Tensor({2}, {4.0, 9.0}));
    const Var args[] = {x};
    CHECK(o::elementwise("rsqrt", args).value() == Tensor({2}, {0.5, 1.0 / 3.0}));
    CHECK(o::elementwise("square", args).value() == Tensor({2}, {16.0, 81.0}));
    CHECK(o::elementwise("scale", args, 3.0).value() == Tensor({2}, {12.0, 27.0}));
    CHECK_THROWS_AS(o::elementwise("tanh", args), ContractError);

    SUBCASE("broadcast only with scalars")
    {
        auto y = o::mul(tape.constant(Tensor({2, 2}, 2.0)), tape.constant(Tensor::scalar(3.0)));
        CHECK(y.value() == Tensor({2, 2}, 6.0));
        CHECK_THROWS_AS(o::add(tape.constant(Tensor({2, 2})), tape.constant(Tensor({2, 3}))), ShapeError);
    }
}

TEST_CASE("backward examples")
{
    Rng rng(4);
    SUBCASE("sum gives ones")
    {
        Tape tape;
        Var x = tape.leaf(random_tensor(rng, {3, 4}));
        auto g = backward(tape, o::sum(x));
        CHECK(g[x] == Tensor::ones({3, 4}));
    }
    SUBCASE("bilinear case")
    {
        Tape tape;
        Tensor yv = random_tensor(rng, {5});
        Var x = tape.leaf(random_tensor(rng, {5}));
        Var y = tape.leaf(yv);
        auto g = backward(tape, o::sum(o::mul(x, y)));
        CHECK(g[x] == yv);
    }
    SUBCASE("untouched leaves get zeros")
    {
        Tape tape;
        Var x = tape.leaf(random_tensor(rng, {2}));
        Var unused = tape.leaf(random_tensor(rng, {3, 3}));
        auto g = backward(tape, o::sum(x));
        CHECK(g[unused] == Tensor::zeros({3, 3}));
    }
    SUBCASE("non-scalar loss is a contract error")
    {
        Tape tape;
        Var x = tape.leaf(random_tensor(rng, {2}));
        CHECK_THROWS_AS(backward(tape, o::square(x)), ContractError);
    }
    SUBCASE("random three-layer composite matches central differences")
    {
        Tensor w1 = random_tensor(rng, {4, 6}, 0.5);
        Tensor w2 = random_tensor(rng, {6, 5}, 0.5);
        Tensor w3 = random_tensor(rng, {5, 1}, 0.5);
        Tensor x = random_tensor(rng, {3, 4});
        DiffFn f = [](Tape&, std::span<const Var> in) {
            Var h = o::softplus(o::matmul(in[0], in[1]));
            h = o::square(o::matmul(h, in[2]));
            return o::mean(o::matmul(h, in[3]));
        };
        CHECK(grad_check(f, {x, w1, w2, w3}, 1e-5) < 1e-4);
    }
}

TEST_CASE("grad_check examples")
{
    SUBCASE("softplus at zero has derivative one half")
    {
        Tape tape;
        Var x = tape.leaf(Tensor::scalar(0.0));
        CHECK(backward(tape, o::softplus(x))[x].item() == doctest::Approx(0.5));
        DiffFn f = [](Tape&, std::span<const Var> in) { return o::sum(o::softplus(in[0])); };
        CHECK(grad_check(f, {Tensor::scalar(0.0)}, 1e-5) < 1e-8);
    }
    SUBCASE("matmul chain is tight in 64-bit")
    {
        Rng rng(8);
        DiffFn f = [](Tape&, std::span<const Var> in) {
            return o::sum(o::matmul(o::matmul(in[0], in[1]), in[2]));
        };
        CHECK(grad_check(f, {random_tensor(rng, {3, 4}), random_tensor(rng, {4, 2}), random_tensor(rng, {2, 3})},
                         1e-5) < 1e-6);
    }
    SUBCASE("a deliberately wrong gradient rule is caught")
    {
        DiffFn f = [](Tape& tape, std::span<const Var> in) {
            const Tensor& x = in[0].value();
            Tensor y(x.shape());
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * x[i] * x[i];
            // True derivative is 3x^2; this rule claims x^2.
            Var cube = tape.record("bad_cube", y, {in[0]},
                                   [x](const Tensor& g, const Tensor&, std::span<Tensor* const> gi) {
                                       for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i] * x[i] * x[i];
                                   });
            return o::sum(cube);
        };
        CHECK(grad_check(f, {Tensor({3}, {1.0, -2.0, 0.7})}, 1e-5) > 1e-2);
    }
    SUBCASE("non-finite evaluation is a numeric error")
    {
        DiffFn f = [](Tape&, std::span<const Var> in) { return o::sum(o::rsqrt(in[0])); };
        CHECK_THROWS_AS(grad_check(f, {Tensor({2}, {-1.0, 1.0})}, 1e-5), NumericError);
    }
}

TEST_CASE("every registered op passes grad_check at 10 random smooth points")
{
    using Builder = std::function<Var(Tape&, std::span<const Var>)>;
    struct Case {
        std::vector<Shape> shapes;
        Builder op;
        bool positive = false;
    };
    // Each op output is contracted with fixed random weights so every output
    // coordinate carries a distinct gradient.
    const std::map<std::string, Case> cases = {
        {"add", {{{3, 4}, {3, 4}}, [](Tape&, auto in) { return o::add(in[0], in[1]); }}},
        {"add_scalar_broadcast", {{{3, 4}, {}}, [](Tape&, auto in) { return o::add(in[0], in[1]); }}},
        {"sub", {{{3, 4}, {3, 4}}, [](Tape&, auto in) { return o::sub(in[0], in[1]); }}},
        {"sub_scalar_left", {{{}, {3, 4}}, [](Tape&, auto in) { return o::sub(in[0], in[1]); }}},
        {"mul", {{{3, 4}, {3, 4}}, [](Tape&, auto in) { return o::mul(in[0], in[1]); }}},
        {"mul_scalar", {{{3, 4}, {}}, [](Tape&, auto in) { return o::mul(in[0], in[1]); }}},
        {"scale", {{{5}}, [](Tape&, auto in) { return o::scale(in[0], -1.7); }}},
        {"add_scalar", {{{5}}, [](Tape&, auto in) { return o::add_scalar(in[0], 0.3); }}},
        {"leaky_relu", {{{6}}, [](Tape&, auto in) { return o::leaky_relu(in[0]); }}},
        {"softplus", {{{6}}, [](Tape&, auto in) { return o::softplus(in[0]); }}},
        {"rsqrt", {{{6}}, [](Tape&, auto in) { return o::rsqrt(in[0]); }, true}},
        {"square", {{{6}}, [](Tape&, auto in) { return o::square(in[0]); }}},
        {"sum", {{{2, 3}}, [](Tape&, auto in) { return o::sum(in[0]); }}},
        {"mean", {{{2, 3}}, [](Tape&, auto in) { return o::mean(in[0]); }}},
        {"matmul", {{{3, 4}, {4, 2}}, [](Tape&, auto in) { return o::matmul(in[0], in[1]); }}},
        {"transpose", {{{3, 4}}, [](Tape&, auto in) { return o::transpose(in[0]); }}},
        {"reshape", {{{3, 4}}, [](Tape&, auto in) { return o::reshape(in[0], {2, 6}); }}},
        {"sum_trailing", {{{2, 3, 2, 2}}, [](Tape&, auto in) { return o::sum_trailing(in[0], 2); }}},
        {"conv2d", {{{2, 2, 5, 5}, {3, 2, 3, 3}}, [](Tape&, auto in) { return o::conv2d(in[0], in[1], 1, 1); }}},
        {"conv2d_strided", {{{1, 2, 6, 6}, {2, 2, 3, 3}}, [](Tape&, auto in) { return o::conv2d(in[0], in[1], 2, 1); }}},
        {"conv2d_pointwise", {{{2, 3, 4, 4}, {2, 3, 1, 1}}, [](Tape&, auto in) { return o::conv2d(in[0], in[1]); }}},
        {"scale_channels", {{{2, 3, 2, 2}, {2, 3}}, [](Tape&, auto in) { return o::scale_channels(in[0], in[1]); }}},
        {"add_channel_bias", {{{2, 3, 2, 2}, {3}}, [](Tape&, auto in) { return o::add_channel_bias(in[0], in[1]); }}},
        {"add_scaled_noise",
         {{{2, 3, 2, 2}, {2, 1, 2, 2}, {1}}, [](Tape&, auto in) { return o::add_scaled_noise(in[0], in[1], in[2]); }}},
        {"upsample2x", {{{1, 2, 3, 3}}, [](Tape&, auto in) { return o::upsample2x(in[0]); }}},
        {"downsample2x", {{{1, 2, 4, 4}}, [](Tape&, auto in) { return o::downsample2x(in[0]); }}},
        {"normalize_rms_rows", {{{3, 5}}, [](Tape&, auto in) { return o::normalize_rms_rows(in[0]); }}},
    };
    Rng rng(99);
    for (const auto& [name, c] : cases) {
        double worst = 0.0;
        for (int point = 0; point < 10; ++point) {
            std::vector<Tensor> inputs;
            for (const auto& s : c.shapes) {
                Tensor t = away_from_zero(random_tensor(rng, s), 0.05);
                if (c.positive) {
                    for (auto& v : t.data()) v = std::abs(v) + 0.2;
                }
                inputs.push_back(t);
            }
            Builder op = c.op;
            Tensor probe;
            {
                Tape tape;
                std::vector<Var> vars;
                for (auto& t : inputs) vars.push_back(tape.constant(t));
                probe = op(tape, vars).value();
            }
            Tensor weights = random_tensor(rng, probe.shape());
            DiffFn f = [op, weights](Tape& tape, std::span<const Var> in) {
                return o::sum(o::mul(op(tape, in), tape.constant(weights)));
            };
            worst = std::max(worst, grad_check(f, inputs, 1e-5));
        }
        INFO("op " << name);
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("algebraic invariants")
{
    Rng rng(12);
    SUBCASE("matmul by identity")
    {
        Tape tape;
        Tensor a = random_tensor(rng, {5, 4});
        Tensor eye({4, 4});
        for (std::size_t i = 0; i < 4; ++i) eye(i, i) = 1.0;
        CHECK(max_abs_diff(o::matmul(tape.constant(a), tape.constant(eye)).value(), a) <= 1e-12);
    }
    SUBCASE("backward is linear in the loss")
    {
        Tensor x = random_tensor(rng, {3, 3});
        Tensor w = random_tensor(rng, {3, 2});
        for (double c : {-2.5, 0.1, 7.0}) {
            Tape t1, t2;
            Var x1 = t1.leaf(x), x2 = t2.leaf(x);
            auto g1 = backward(t1, o::sum(o::softplus(o::matmul(x1, t1.constant(w)))));
            auto g2 = backward(t2, o::scale(o::sum(o::softplus(o::matmul(x2, t2.constant(w)))), c));
            for (std::size_t i = 0; i < x.size(); ++i) {
                CHECK(std::abs(g2[x2][i] - c * g1[x1][i]) <= 1e-12 * std::max(1.0, std::abs(c * g1[x1][i])));
            }
        }
    }
    SUBCASE("replaying a forward graph is bitwise deterministic")
    {
        Tensor x = random_tensor(rng, {2, 3, 6, 6});
        Tensor k = random_tensor(rng, {4, 3, 3, 3});
        auto run = [&] {
            Tape tape;
            Var y = o::leaky_relu(o::conv2d(tape.leaf(x), tape.leaf(k), 1, 1));
            y = o::downsample2x(o::upsample2x(y));
            return std::pair{y.value(), backward(tape, o::sum(o::square(y))).at(0)};
        };
        auto [a, ga] = run();
        auto [b, gb] = run();
        CHECK(a == b);
        CHECK(ga == gb);
    }
    SUBCASE("tape inputs reference earlier nodes only")
    {
        Tape tape;
        Var a = tape.leaf(random_tensor(rng, {2}));
        Var b = o::square(a);
        Var c = o::add(a, b);
        for (std::size_t id = 0; id < tape.size(); ++id) {
            for (auto in : tape.inputs(id)) CHECK(in < id);
        }
        CHECK(tape.op(c.id) == "add");
    }
}
