#pragma once

#include <vector>

#include "bikd/tape.hpp"
#include "bikd/tensor.hpp"

namespace bikd {

// Which softened distribution leads the KL. Forward is KL(teacher || student),
// the usual soft-label direction; Reverse swaps the arguments. The gradient
// reaches only the student branch in both cases.
enum class KlDirection { Forward, Reverse };

struct LossWeights {
    double temperature = 1.0;
    double lambda_ce = 5.0;
    double lambda_dice = 5.0;
    double lambda_cls_correct = 2.0;
    double lambda_cls_incorrect = 0.1;
    double dice_eps = 1.0;
    double cc_floor = 1e-8;

    void validate() const;
};

// Temperature-scaled distillation divergence, T^2 * KL per sample. The teacher
// logits are severed with stop_gradient before softening.
Tensor kl_distill_per_sample(Tape& t, const Tensor& z_student, const Tensor& z_teacher,
                             double temperature, KlDirection dir = KlDirection::Forward);
// Batch mean of the per-sample values (the T^2/N form).
Tensor kl_distill(Tape& t, const Tensor& z_student, const Tensor& z_teacher, double temperature,
                  KlDirection dir = KlDirection::Forward);

Tensor cross_entropy_per_sample(Tape& t, const Tensor& z, const std::vector<int>& labels);
Tensor cross_entropy(Tape& t, const Tensor& z, const std::vector<int>& labels);

// lambda_ce * BCE(p,q) + lambda_dice * (1 - (2*sum(pq)+eps)/(sum p + sum q + eps)).
// p must lie strictly inside (0,1); q is a binary constant map.
Tensor mask_loss(Tape& t, const Tensor& p, const Tensor& q, const LossWeights& w);

// mask_loss plus lambda_cls * CE(z_cls, y_cls); lambda_cls switches between the
// correct- and incorrect-prediction weights on argmax(z_cls) == y_cls.
Tensor semseg_loss(Tape& t, const Tensor& z_cls, const Tensor& mask_probs, int y_cls,
                   const Tensor& y_mask, const LossWeights& w);

// Pearson correlation, differentiable. Degenerate (near-constant) inputs are an
// error: the definition divides by their variance.
Tensor cc(Tape& t, const Tensor& p, const Tensor& q, double variance_floor = 1e-8);

// Saliency loss: KL(q_norm || p_norm) - cc(p, q), maps sum-normalized first.
Tensor vsp_loss(Tape& t, const Tensor& p, const Tensor& q, const LossWeights& w);

} // namespace bikd
