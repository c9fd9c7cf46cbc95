#include "artgan/grad_check.hpp"

#include "artgan/errors.hpp"
#include "artgan/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace artgan {

namespace {

double evaluate(const DiffFn& f, const std::vector<Tensor>& inputs)
{
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const auto& t : inputs) {
        vars.push_back(tape.leaf(t));
    }
    const double value = f(tape, vars).value().item();
    if (!std::isfinite(value)) {
        throw NumericError("grad_check: function value is not finite");
    }
    return value;
}

} // namespace

double grad_check(const DiffFn& f, const std::vector<Tensor>& inputs, const GradCheckOptions& options)
{
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : inputs) {
        vars.push_back(tape.leaf(t));
    }
    const Var out = f(tape, vars);
    if (!out.value().all_finite()) {
        throw NumericError("grad_check: function value is not finite");
    }
    const Gradients grads = backward(tape, out);

    Rng rng(options.seed);
    double worst = 0.0;
    std::vector<Tensor> probe = inputs;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Tensor& analytic = grads[vars[k]];
        if (!analytic.all_finite()) {
            throw NumericError("grad_check: analytic gradient is not finite");
        }
        std::vector<std::size_t> coords(inputs[k].size());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (options.max_coords_per_input > 0 && coords.size() > options.max_coords_per_input) {
            rng.shuffle(coords);
            coords.resize(options.max_coords_per_input);
        }
        for (std::size_t i : coords) {
            const double orig = inputs[k][i];
            probe[k][i] = orig + options.eps;
            const double up = evaluate(f, probe);
            probe[k][i] = orig - options.eps;
            const double down = evaluate(f, probe);
            probe[k][i] = orig;
            const double numeric = (up - down) / (2.0 * options.eps);
            const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

double grad_check(const DiffFn& f, const std::vector<Tensor>& inputs, double eps)
{
    GradCheckOptions options;
    options.eps = eps;
    return grad_check(f, inputs, options);
}

} // namespace artgan
