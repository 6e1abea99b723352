#include "bikd/partition.hpp"

#include <cmath>
#include <string>

#include "bikd/errors.hpp"

namespace bikd {

std::size_t PartitionMask::teacher_of(std::size_t sample) const {
    for (std::size_t m = 0; m < k; ++m) {
        if (assign[sample * k + m]) return m;
    }
    throw ContractError("partition mask row without a teacher");
}

std::vector<double> PartitionMask::teacher_fractions() const {
    std::vector<double> f(k, 0.0);
    if (n == 0) return f;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t m = 0; m < k; ++m) f[m] += assign[i * k + m];
    }
    for (auto& v : f) v /= static_cast<double>(n);
    return f;
}

std::vector<double> PartitionMask::column(std::size_t model) const {
    std::vector<double> c(n);
    for (std::size_t i = 0; i < n; ++i) c[i] = assign[i * k + model] ? 1.0 : 0.0;
    return c;
}

std::vector<double> gt_probabilities(const Tensor& z, const std::vector<int>& labels) {
    const std::size_t n = z.rows(), c = z.cols();
    if (labels.size() != n) {
        throw DimensionError("gt_probabilities: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(n) + " rows");
    }
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= c) {
            throw DataError("gt_probabilities: label " + std::to_string(y) + " outside [0," +
                            std::to_string(c) + ")");
        }
        double mx = z.at(i, 0);
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, z.at(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) denom += std::exp(z.at(i, j) - mx);
        out[i] = std::exp(z.at(i, static_cast<std::size_t>(y)) - mx) / denom;
    }
    return out;
}

PartitionMask confidence_masks(const Tensor& z1, const Tensor& z2, const std::vector<int>& labels) {
    if (z1.shape != z2.shape) {
        throw DimensionError("confidence_masks: logits shapes differ: " + shape_str(z1.shape) +
                             " vs " + shape_str(z2.shape));
    }
    const auto p1 = gt_probabilities(z1, labels);
    const auto p2 = gt_probabilities(z2, labels);
    PartitionMask m;
    m.n = p1.size();
    m.k = 2;
    m.rule = PartitionRule::Confidence;
    m.tie_note = "ties assigned to model 2";
    m.assign.assign(m.n * 2, 0);
    for (std::size_t i = 0; i < m.n; ++i) {
        m.assign[i * 2 + (p1[i] > p2[i] ? 0 : 1)] = 1;
    }
    return m;
}

PartitionMask loss_masks(const std::vector<double>& losses, std::size_t n) {
    if (losses.size() != n * 2) {
        throw DimensionError("loss_masks: expected n x 2 losses, got " + std::to_string(losses.size()));
    }
    for (double v : losses) {
        if (std::isnan(v)) throw DataError("loss_masks: NaN task loss");
    }
    PartitionMask m;
    m.n = n;
    m.k = 2;
    m.rule = PartitionRule::Loss;
    m.tie_note = "ties assigned to model 2";
    m.assign.assign(n * 2, 0);
    for (std::size_t i = 0; i < n; ++i) {
        m.assign[i * 2 + (losses[i * 2] < losses[i * 2 + 1] ? 0 : 1)] = 1;
    }
    return m;
}

PartitionMask multi_masks(const std::vector<double>& gt_probs, std::size_t n, std::size_t k) {
    if (k < 2) throw ConfigError("multi_masks: need at least 2 models");
    if (gt_probs.size() != n * k) {
        throw DimensionError("multi_masks: expected n x k probabilities");
    }
    for (double v : gt_probs) {
        if (!(v >= 0.0 && v <= 1.0)) throw DataError("multi_masks: probability outside [0,1]");
    }
    PartitionMask m;
    m.n = n;
    m.k = k;
    m.rule = PartitionRule::Confidence;
    m.tie_note = "ties assigned to the lowest model index";
    m.assign.assign(n * k, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j) {
            if (gt_probs[i * k + j] > gt_probs[i * k + best]) best = j;
        }
        m.assign[i * k + best] = 1;
    }
    return m;
}

CaseStats classify_cases(const Tensor& z_teacher, const Tensor& z_student,
                         const std::vector<int>& labels) {
    if (z_teacher.shape != z_student.shape) {
        throw DimensionError("classify_cases: logits shapes differ");
    }
    const auto pt = gt_probabilities(z_teacher, labels);
    const auto ps = gt_probabilities(z_student, labels);
    const std::size_t n = z_teacher.rows(), c = z_teacher.cols();
    for (std::size_t i = 0; i < n; ++i) {
        if (pt[i] < ps[i]) {
            throw ContractError("classify_cases: row " + std::to_string(i) +
                                " violates the teacher orientation precondition");
        }
    }
    auto row_argmax = [&](const Tensor& z, std::size_t i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < c; ++j) {
            if (z.at(i, j) > z.at(i, best)) best = j;
        }
        return best;
    };
    CaseStats s;
    s.total = n;
    for (std::size_t i = 0; i < n; ++i) {
        const auto y = static_cast<std::size_t>(labels[i]);
        const bool teacher_ok = row_argmax(z_teacher, i) == y;
        const bool student_ok = row_argmax(z_student, i) == y;
        if (teacher_ok && student_ok) {
            ++s.case1;
        } else if (teacher_ok) {
            ++s.case2;
        } else {
            ++s.case3;
        }
    }
    if (n > 0) {
        s.frac1 = static_cast<double>(s.case1) / static_cast<double>(n);
        s.frac2 = static_cast<double>(s.case2) / static_cast<double>(n);
        s.frac3 = static_cast<double>(s.case3) / static_cast<double>(n);
    }
    return s;
}

} // namespace bikd
