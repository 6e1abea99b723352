#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "bikd/tensor.hpp"

namespace bikd {

// Gradient arrays produced by one backward pass, addressed by tape node id.
// Every requires_grad leaf has an entry (zeros when no gradient reached it);
// reached(id) distinguishes leaves the traversal actually visited from leaves
// severed by stop_gradient.
class Gradients {
public:
    bool has(int node) const;
    bool reached(int node) const;
    const std::vector<double>& at(int node) const;

private:
    friend class Tape;
    friend class GradSink;
    std::vector<std::vector<double>> grads_;
    std::vector<unsigned char> reached_;
};

// Accumulator handed to backward rules; lazily allocates per-node buffers.
class GradSink {
public:
    std::vector<double>& at(int node);

private:
    friend class Tape;
    explicit GradSink(Gradients& g, const std::vector<std::size_t>& sizes)
        : g_(g), sizes_(sizes) {}
    Gradients& g_;
    const std::vector<std::size_t>& sizes_;
};

using BackwardFn = std::function<void(const std::vector<double>& out_grad, GradSink& sink)>;

// Reverse-mode tape, rebuilt per forward pass. Nodes are recorded in creation
// order, which is topological: a node's inputs always precede it.
class Tape {
public:
    Tensor leaf(Shape shape, std::vector<double> data, bool requires_grad = true);
    Tensor leaf(const Tensor& value, bool requires_grad = true);

    // Records an operation node; fn may be empty for leaves.
    int record(std::size_t out_size, BackwardFn fn);

    // Reverse pass from a scalar loss on this tape. Visits each node at most
    // once, in fixed reverse order; repeated calls are independent and
    // bit-identical.
    Gradients backward(const Tensor& loss) const;

    std::size_t node_count() const { return sizes_.size(); }

private:
    std::vector<std::size_t> sizes_;
    std::vector<BackwardFn> fns_;
    std::vector<int> grad_leaves_;
};

// ---- operations -----------------------------------------------------------
// Binary elementwise ops accept equal shapes or a single-element b, which is
// broadcast; there is no other broadcasting.

Tensor matmul(Tape& t, const Tensor& a, const Tensor& b);

Tensor add(Tape& t, const Tensor& a, const Tensor& b);
Tensor sub(Tape& t, const Tensor& a, const Tensor& b);
Tensor mul(Tape& t, const Tensor& a, const Tensor& b);
Tensor div(Tape& t, const Tensor& a, const Tensor& b);
Tensor add(Tape& t, const Tensor& a, double c);
Tensor scale(Tape& t, const Tensor& a, double c);

Tensor relu(Tape& t, const Tensor& a);
// clips into [lo, hi]; gradient is zero where the clip is active
Tensor clamp(Tape& t, const Tensor& a, double lo, double hi);
Tensor exp(Tape& t, const Tensor& a);
Tensor log(Tape& t, const Tensor& a);
Tensor sqrt(Tape& t, const Tensor& a);
Tensor sigmoid(Tape& t, const Tensor& a);

// Row-wise softmax of z / temperature, max-subtracted for stability.
Tensor softmax(Tape& t, const Tensor& z, double temperature);
// log(softmax(z, T)) computed without forming the exponential ratio.
Tensor log_softmax(Tape& t, const Tensor& z, double temperature);

// Identity forward, severs the gradient path entirely (the result is a plain
// constant).
Tensor stop_gradient(const Tensor& a);

// Per-row temperature-softened KL between logit rows, scaled by T^2; the
// teacher side is treated as a constant regardless of its tape state. Fused so
// the backward rule is the analytic T*(p_s - p_t) (or its reverse-direction
// counterpart), which vanishes identically when the softened distributions
// coincide.
Tensor softened_kl_rows(Tape& t, const Tensor& z_student, const Tensor& z_teacher,
                        double temperature, bool teacher_leads);

Tensor sum(Tape& t, const Tensor& a);                   // -> [1]
Tensor mean(Tape& t, const Tensor& a);                  // -> [1]
Tensor sum_rows(Tape& t, const Tensor& a);              // [N x C] -> [N]
Tensor sum_cols(Tape& t, const Tensor& a);              // [N x C] -> [C]
Tensor take_per_row(Tape& t, const Tensor& a, const std::vector<int>& idx); // [N x C] -> [N]
Tensor add_rows(Tape& t, const Tensor& a, const Tensor& bias);              // [N x F] + [F]
Tensor reshape(Tape& t, const Tensor& a, Shape s);
Tensor select_row(Tape& t, const Tensor& a, std::size_t row);               // [N x C] -> [C]
Tensor slice_cols(Tape& t, const Tensor& a, std::size_t c0, std::size_t c1); // [N x C] -> [N x (c1-c0)]
Tensor stack_scalars(Tape& t, const std::vector<Tensor>& parts);            // N scalars -> [N]

} // namespace bikd
