#pragma once

#include <functional>
#include <vector>

#include "bikd/tape.hpp"
#include "bikd/tensor.hpp"

namespace bikd {

struct GradCheckReport {
    double max_rel_err = 0.0;
    bool pass = false;
    std::size_t compared = 0; // elements compared against finite differences
    std::size_t skipped = 0;  // elements of leaves severed by stop_gradient
};

// Scalar function of a list of tensors, evaluated on a fresh tape per call.
using ScalarFn = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

// Compares backward() gradients against central finite differences. Relative
// error uses max(|analytic|, |numeric|, 1e-8) as denominator. Leaves the
// backward traversal never reached (severed by stop_gradient) are skipped:
// finite differences would measure a derivative the graph deliberately drops.
GradCheckReport grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs,
                           double step = 1e-6, double tol = 1e-4);

GradCheckReport grad_check(const ScalarFn& f, const Tensor& input, double step = 1e-6,
                           double tol = 1e-4);

} // namespace bikd
