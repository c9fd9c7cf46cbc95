#pragma once

#include "artgan/autodiff.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace artgan {

/// Builds a scalar on `tape` from leaves bound to the given inputs.
using DiffFn = std::function<Var(Tape& tape, std::span<const Var> inputs)>;

struct GradCheckOptions {
    double eps = 1e-5;
    /// 0 checks every coordinate; otherwise a seeded sample of this many per input.
    std::size_t max_coords_per_input = 0;
    std::uint64_t seed = 0;
};

/// Max over checked coordinates of |analytic - central difference| / max(1, |analytic|).
/// Throws NumericError if any evaluation is non-finite.
double grad_check(const DiffFn& f, const std::vector<Tensor>& inputs, const GradCheckOptions& options = {});
double grad_check(const DiffFn& f, const std::vector<Tensor>& inputs, double eps);

} // namespace artgan
