#include "bikd/losses.hpp"

#include <cmath>
#include <string>

#include "bikd/errors.hpp"

namespace bikd {

void LossWeights::validate() const {
    if (!(temperature > 0.0)) throw ConfigError("loss weights: temperature must be positive");
    if (lambda_ce < 0 || lambda_dice < 0 || lambda_cls_correct < 0 || lambda_cls_incorrect < 0) {
        throw ConfigError("loss weights: lambdas must be nonnegative");
    }
    if (!(dice_eps > 0.0)) throw ConfigError("loss weights: dice smoothing must be positive");
}

Tensor kl_distill_per_sample(Tape& t, const Tensor& z_student, const Tensor& z_teacher,
                             double temperature, KlDirection dir) {
    if (!(temperature > 0.0)) throw ConfigError("kl_distill: temperature must be positive");
    if (z_student.shape != z_teacher.shape) {
        throw DimensionError("kl_distill: student " + shape_str(z_student.shape) + " vs teacher " +
                             shape_str(z_teacher.shape));
    }
    // the fused op treats the teacher branch as constant: stop_gradient built in
    return softened_kl_rows(t, z_student, stop_gradient(z_teacher), temperature,
                            dir == KlDirection::Forward);
}

Tensor kl_distill(Tape& t, const Tensor& z_student, const Tensor& z_teacher, double temperature,
                  KlDirection dir) {
    return mean(t, kl_distill_per_sample(t, z_student, z_teacher, temperature, dir));
}

Tensor cross_entropy_per_sample(Tape& t, const Tensor& z, const std::vector<int>& labels) {
    const std::size_t c = z.cols();
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= c) {
            throw DataError("cross_entropy: label " + std::to_string(y) + " outside [0," +
                            std::to_string(c) + ")");
        }
    }
    return scale(t, take_per_row(t, log_softmax(t, z, 1.0), labels), -1.0);
}

Tensor cross_entropy(Tape& t, const Tensor& z, const std::vector<int>& labels) {
    return mean(t, cross_entropy_per_sample(t, z, labels));
}

Tensor mask_loss(Tape& t, const Tensor& p, const Tensor& q, const LossWeights& w) {
    w.validate();
    if (p.shape != q.shape) {
        throw DimensionError("mask_loss: prediction " + shape_str(p.shape) + " vs target " +
                             shape_str(q.shape));
    }
    for (double v : p.data) {
        if (!(v > 0.0 && v < 1.0)) throw DomainError("mask_loss: probabilities must lie in (0,1)");
    }
    for (double v : q.data) {
        if (v != 0.0 && v != 1.0) throw DataError("mask_loss: target must be binary");
    }
    Tensor qc = stop_gradient(q);
    Tensor one_minus_p = add(t, scale(t, p, -1.0), 1.0);
    Tensor one_minus_q = add(t, scale(t, qc, -1.0), 1.0);
    Tensor bce_terms = add(t, mul(t, qc, log(t, p)), mul(t, one_minus_q, log(t, one_minus_p)));
    Tensor bce = scale(t, mean(t, bce_terms), -1.0);

    Tensor inter = sum(t, mul(t, p, qc));
    Tensor denom = add(t, add(t, sum(t, p), sum(t, qc)), w.dice_eps);
    Tensor dice_score = div(t, add(t, scale(t, inter, 2.0), w.dice_eps), denom);
    Tensor dice = add(t, scale(t, dice_score, -1.0), 1.0);

    return add(t, scale(t, bce, w.lambda_ce), scale(t, dice, w.lambda_dice));
}

Tensor semseg_loss(Tape& t, const Tensor& z_cls, const Tensor& mask_probs, int y_cls,
                   const Tensor& y_mask, const LossWeights& w) {
    if (z_cls.shape.size() != 1) {
        throw DimensionError("semseg_loss: z_cls must be a vector, got " + shape_str(z_cls.shape));
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < z_cls.size(); ++i) {
        if (z_cls.data[i] > z_cls.data[best]) best = i;
    }
    const double lambda_cls =
        (best == static_cast<std::size_t>(y_cls)) ? w.lambda_cls_correct : w.lambda_cls_incorrect;
    Tensor ce = cross_entropy(t, reshape(t, z_cls, {1, z_cls.size()}), {y_cls});
    return add(t, mask_loss(t, mask_probs, y_mask, w), scale(t, ce, lambda_cls));
}

Tensor cc(Tape& t, const Tensor& p, const Tensor& q, double variance_floor) {
    if (p.shape != q.shape) {
        throw DimensionError("cc: shapes differ: " + shape_str(p.shape) + " vs " + shape_str(q.shape));
    }
    const auto n = static_cast<double>(p.size());
    if (p.size() < 2) throw DegenerateInputError("cc: need at least two elements");

    auto variance_of = [&](const Tensor& v) {
        double m = 0.0;
        for (double x : v.data) m += x;
        m /= n;
        double s = 0.0;
        for (double x : v.data) s += (x - m) * (x - m);
        return s / n;
    };
    if (variance_of(p) < variance_floor || variance_of(q) < variance_floor) {
        throw DegenerateInputError("cc: input variance below floor; correlation undefined");
    }

    Tensor cp = sub(t, p, mean(t, p));
    Tensor cq = sub(t, q, mean(t, q));
    Tensor cov = mean(t, mul(t, cp, cq));
    Tensor var_p = mean(t, mul(t, cp, cp));
    Tensor var_q = mean(t, mul(t, cq, cq));
    return div(t, cov, sqrt(t, mul(t, var_p, var_q)));
}

Tensor vsp_loss(Tape& t, const Tensor& p, const Tensor& q, const LossWeights& w) {
    w.validate();
    if (p.shape != q.shape) {
        throw DimensionError("vsp_loss: shapes differ: " + shape_str(p.shape) + " vs " +
                             shape_str(q.shape));
    }
    double sum_p = 0.0, sum_q = 0.0;
    for (double v : p.data) {
        if (v < 0.0) throw DomainError("vsp_loss: predicted map must be nonnegative");
        sum_p += v;
    }
    for (double v : q.data) {
        if (v < 0.0) throw DomainError("vsp_loss: target map must be nonnegative");
        sum_q += v;
    }
    if (sum_p <= 0.0 || sum_q <= 0.0) {
        throw DegenerateInputError("vsp_loss: map with zero total mass");
    }

    // q is the supervision signal; constant by definition
    Tensor q_const = stop_gradient(q);
    Tensor qn = scale(t, q_const, 1.0 / sum_q);
    Tensor pn = div(t, p, sum(t, p));
    // KL(qn || pn), taking 0 log 0 = 0 on empty target pixels
    const double floor = 1e-300;
    std::vector<double> q_pos(qn.data);
    for (auto& v : q_pos) v = v > 0.0 ? v : floor;
    Tensor q_for_log = Tensor::constant(qn.shape, q_pos);
    Tensor kl_terms = mul(t, q_for_log, sub(t, log(t, q_for_log), log(t, pn)));
    Tensor kl = sum(t, kl_terms);

    return sub(t, kl, cc(t, p, q_const, w.cc_floor));
}

} // namespace bikd
