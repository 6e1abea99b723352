#include "bikd/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "bikd/errors.hpp"

namespace bikd {

namespace {

double eval_value(const ScalarFn& f, const std::vector<Tensor>& xs) {
    Tape t;
    std::vector<Tensor> leaves;
    leaves.reserve(xs.size());
    for (const auto& x : xs) leaves.push_back(t.leaf(x.shape, x.data, true));
    Tensor y = f(t, leaves);
    return y.item();
}

} // namespace

GradCheckReport grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double step,
                           double tol) {
    if (step <= 0.0 || tol <= 0.0) throw ConfigError("grad_check: step and tol must be positive");

    Tape t;
    std::vector<Tensor> leaves;
    leaves.reserve(inputs.size());
    for (const auto& x : inputs) leaves.push_back(t.leaf(x.shape, x.data, true));
    Tensor loss = f(t, leaves);
    if (loss.size() != 1) throw ContractError("grad_check: function must be scalar-valued");
    Gradients grads = t.backward(loss);

    GradCheckReport report;
    std::vector<Tensor> probe = inputs;
    for (std::size_t which = 0; which < inputs.size(); ++which) {
        if (!grads.reached(leaves[which].node)) {
            report.skipped += inputs[which].size();
            continue;
        }
        const auto& analytic = grads.at(leaves[which].node);
        for (std::size_t i = 0; i < probe[which].size(); ++i) {
            const double keep = probe[which].data[i];
            probe[which].data[i] = keep + step;
            const double up = eval_value(f, probe);
            probe[which].data[i] = keep - step;
            const double down = eval_value(f, probe);
            probe[which].data[i] = keep;
            const double numeric = (up - down) / (2.0 * step);
            const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-8});
            report.max_rel_err = std::max(report.max_rel_err, std::fabs(analytic[i] - numeric) / denom);
            ++report.compared;
        }
    }
    report.pass = report.max_rel_err <= tol;
    return report;
}

GradCheckReport grad_check(const ScalarFn& f, const Tensor& input, double step, double tol) {
    return grad_check(f, std::vector<Tensor>{input}, step, tol);
}

} // namespace bikd
