#pragma once

#include <ostream>

namespace gymgrid {

/// Quick invariant suite: Game of Life golden patterns and exhaustive 3x3
/// boards, the convolutional step, value-head counting, receptive fields and
/// gradient checks. Prints one line per check; returns true when all pass.
bool run_selfcheck(std::ostream& out);

}  // namespace gymgrid
