#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "bikd/tensor.hpp"

namespace bikd {

enum class PartitionRule { Confidence, Loss };

// Per-sample one-hot teacher assignment over K models.
struct PartitionMask {
    std::size_t n = 0;
    std::size_t k = 0;
    std::vector<unsigned char> assign; // n x k, exactly one 1 per row
    PartitionRule rule = PartitionRule::Confidence;
    std::string tie_note;

    bool is_teacher(std::size_t sample, std::size_t model) const {
        return assign[sample * k + model] != 0;
    }
    std::size_t teacher_of(std::size_t sample) const;
    // fraction of samples each model teaches
    std::vector<double> teacher_fractions() const;
    // 0/1 column as doubles, for loss masking
    std::vector<double> column(std::size_t model) const;
};

// Per-sample taxonomy of teacher/student correctness.
//   case 1: both argmax-correct
//   case 2: teacher correct, student incorrect
//   case 3: teacher incorrect (the residual bucket)
struct CaseStats {
    std::size_t total = 0;
    std::size_t case1 = 0, case2 = 0, case3 = 0;
    double frac1 = 0.0, frac2 = 0.0, frac3 = 0.0;
};

// Softmax probability of the ground-truth class per sample.
std::vector<double> gt_probabilities(const Tensor& z, const std::vector<int>& labels);

// K=2 masks from ground-truth confidence; ties assign model 2 as teacher.
PartitionMask confidence_masks(const Tensor& z1, const Tensor& z2, const std::vector<int>& labels);

// K=2 masks from per-sample task losses (n x 2, row-major); the lower loss
// teaches, ties assign model 2.
PartitionMask loss_masks(const std::vector<double>& losses, std::size_t n);

// K>=2 masks from an n x k grid of ground-truth probabilities; argmax per row,
// ties broken toward the lowest model index. Note this tie rule differs from
// the K=2 confidence rule, which sends ties to model 2.
PartitionMask multi_masks(const std::vector<double>& gt_probs, std::size_t n, std::size_t k);

// Requires the caller to orient rows so the teacher's gt-confidence is the
// larger one (ties allowed).
CaseStats classify_cases(const Tensor& z_teacher, const Tensor& z_student,
                         const std::vector<int>& labels);

} // namespace bikd
