#pragma once

#include "artgan/image_io.hpp"
#include "artgan/tensor.hpp"

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace artgan::cli {

/// Runs one subcommand (preprocess, train, resume, generate, evaluate,
/// survey, pipeline, version). args excludes the program name. Returns 0 on
/// success, 1 for usage and validation errors, 2 for runtime and numeric
/// errors; messages go to err.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// N x 3 x R x R images in [-1, 1] tiled `per_row` across; unused cells are black.
Image sample_grid(const Tensor& images, std::size_t per_row = 8);

} // namespace artgan::cli
