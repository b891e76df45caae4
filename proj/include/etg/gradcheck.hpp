#pragma once

#include "etg/tensor.hpp"

#include <functional>

namespace etg {

// Compares the reverse-mode gradient of build() with central finite
// differences taken coordinate-wise on param's value, and returns the worst
// relative error max |ad - fd| / (|fd| + 1e-8). build() must construct a
// fresh scalar graph from the parameter's current value each call, holding
// any randomness fixed, so that the comparison sees a deterministic function.
// Throws on non-finite function values.
double finite_difference_check(Tensor param,
                               const std::function<Tensor()>& build,
                               double h = 1e-5);

}  // namespace etg
