#include "bikd/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "bikd/errors.hpp"

namespace bikd {

// ---- Gradients / GradSink ---------------------------------------------------

bool Gradients::has(int node) const {
    return node >= 0 && node < static_cast<int>(grads_.size()) && !grads_[node].empty();
}

bool Gradients::reached(int node) const {
    return node >= 0 && node < static_cast<int>(reached_.size()) && reached_[node] != 0;
}

const std::vector<double>& Gradients::at(int node) const {
    if (!has(node)) throw ContractError("Gradients::at: no gradient tracked for node " + std::to_string(node));
    return grads_[node];
}

std::vector<double>& GradSink::at(int node) {
    auto& buf = g_.grads_[node];
    if (buf.empty()) buf.assign(sizes_[node], 0.0);
    g_.reached_[node] = 1;
    return buf;
}

// ---- Tape -------------------------------------------------------------------

int Tape::record(std::size_t out_size, BackwardFn fn) {
    sizes_.push_back(out_size);
    fns_.push_back(std::move(fn));
    return static_cast<int>(sizes_.size()) - 1;
}

Tensor Tape::leaf(Shape shape, std::vector<double> data, bool requires_grad) {
    Tensor v(std::move(shape), std::move(data));
    if (requires_grad) {
        v.node = record(v.size(), BackwardFn{});
        v.tape = this;
        v.requires_grad = true;
        grad_leaves_.push_back(v.node);
    }
    return v;
}

Tensor Tape::leaf(const Tensor& value, bool requires_grad) {
    return leaf(value.shape, value.data, requires_grad);
}

Gradients Tape::backward(const Tensor& loss) const {
    if (loss.size() != 1) {
        throw ContractError("backward: loss must be scalar, got " + shape_str(loss.shape));
    }
    if (!loss.on_tape() || loss.tape != this) {
        throw ContractError("backward: loss was not produced on this tape");
    }
    Gradients out;
    out.grads_.resize(sizes_.size());
    out.reached_.assign(sizes_.size(), 0);
    GradSink sink(out, sizes_);
    sink.at(loss.node)[0] = 1.0;
    for (int id = loss.node; id >= 0; --id) {
        if (out.grads_[id].empty()) continue;
        if (fns_[id]) fns_[id](out.grads_[id], sink);
    }
    // every requires_grad leaf reports a gradient, zeros when unreached
    for (int leaf_id : grad_leaves_) {
        if (out.grads_[leaf_id].empty()) out.grads_[leaf_id].assign(sizes_[leaf_id], 0.0);
    }
    return out;
}

// ---- op helpers -------------------------------------------------------------

namespace {

void check_tape(const Tape& t, const Tensor& x, const char* op) {
    if (x.on_tape() && x.tape != &t) {
        throw ContractError(std::string(op) + ": tensor belongs to another tape");
    }
}

void check_finite(const std::vector<double>& v, const char* op) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw NumericError(std::string(op) + ": non-finite value in result");
        }
    }
}

Tensor make_result(Tape& t, Shape shape, std::vector<double> data, bool tracked, BackwardFn fn,
                   const char* op) {
    check_finite(data, op);
    Tensor out(std::move(shape), std::move(data));
    if (tracked) {
        out.node = t.record(out.size(), std::move(fn));
        out.tape = &t;
        out.requires_grad = true;
    }
    return out;
}

bool any_tracked(const Tensor& a, const Tensor& b) { return a.on_tape() || b.on_tape(); }

// rank-preserving binary elementwise with optional single-element b broadcast
template <typename Fwd, typename Bwd>
Tensor binary_op(Tape& t, const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Bwd bwd) {
    check_tape(t, a, name);
    check_tape(t, b, name);
    const bool bcast = b.size() == 1 && a.size() != 1;
    if (!bcast && a.shape != b.shape) {
        throw DimensionError(std::string(name) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                             shape_str(b.shape));
    }
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = fwd(a.data[i], b.data[bcast ? 0 : i]);
    }
    BackwardFn fn;
    if (any_tracked(a, b)) {
        fn = [an = a.node, bn = b.node, av = a.data, bv = b.data, bcast, bwd](
                 const std::vector<double>& g, GradSink& sink) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                double da, db;
                bwd(av[i], bv[bcast ? 0 : i], g[i], da, db);
                if (an >= 0) sink.at(an)[i] += da;
                if (bn >= 0) sink.at(bn)[bcast ? 0 : i] += db;
            }
        };
    }
    return make_result(t, a.shape, std::move(out), any_tracked(a, b), std::move(fn), name);
}

template <typename Fwd, typename Bwd>
Tensor unary_op(Tape& t, const Tensor& a, const char* name, Fwd fwd, Bwd bwd) {
    check_tape(t, a, name);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = fwd(a.data[i]);
    BackwardFn fn;
    if (a.on_tape()) {
        fn = [an = a.node, av = a.data, ov = out, bwd](const std::vector<double>& g, GradSink& sink) {
            auto& ga = sink.at(an);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += bwd(av[i], ov[i], g[i]);
        };
    }
    return make_result(t, a.shape, std::move(out), a.on_tape(), std::move(fn), name);
}

void require_rank2ish(const Tensor& a, const char* op) {
    if (a.shape.size() > 2 || a.shape.empty()) {
        throw DimensionError(std::string(op) + ": expected rank 1 or 2, got " + shape_str(a.shape));
    }
}

} // namespace

// ---- matmul -----------------------------------------------------------------

Tensor matmul(Tape& t, const Tensor& a, const Tensor& b) {
    check_tape(t, a, "matmul");
    check_tape(t, b, "matmul");
    if (a.shape.size() != 2 || b.shape.size() != 2) {
        throw DimensionError("matmul: expects rank-2 operands, got " + shape_str(a.shape) + " and " +
                             shape_str(b.shape));
    }
    const std::size_t m = a.shape[0], k = a.shape[1], k2 = b.shape[0], n = b.shape[1];
    if (k != k2) {
        throw DimensionError("matmul: inner dimensions disagree: " + shape_str(a.shape) + " vs " +
                             shape_str(b.shape));
    }
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a.data[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = &b.data[p * n];
            double* orow = &out[i * n];
            for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
    BackwardFn fn;
    if (any_tracked(a, b)) {
        fn = [an = a.node, bn = b.node, av = a.data, bv = b.data, m, k, n](
                 const std::vector<double>& g, GradSink& sink) {
            if (an >= 0) {
                auto& ga = sink.at(an); // g . b^T
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        const double gij = g[i * n + j];
                        if (gij == 0.0) continue;
                        for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gij * bv[p * n + j];
                    }
            }
            if (bn >= 0) {
                auto& gb = sink.at(bn); // a^T . g
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        const double aip = av[i * k + p];
                        if (aip == 0.0) continue;
                        for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
                    }
            }
        };
    }
    return make_result(t, {m, n}, std::move(out), any_tracked(a, b), std::move(fn), "matmul");
}

// ---- elementwise ------------------------------------------------------------

Tensor add(Tape& t, const Tensor& a, const Tensor& b) {
    return binary_op(t, a, b, "add",
                     [](double x, double y) { return x + y; },
                     [](double, double, double g, double& da, double& db) { da = g; db = g; });
}

Tensor sub(Tape& t, const Tensor& a, const Tensor& b) {
    return binary_op(t, a, b, "sub",
                     [](double x, double y) { return x - y; },
                     [](double, double, double g, double& da, double& db) { da = g; db = -g; });
}

Tensor mul(Tape& t, const Tensor& a, const Tensor& b) {
    return binary_op(t, a, b, "mul",
                     [](double x, double y) { return x * y; },
                     [](double x, double y, double g, double& da, double& db) {
                         da = g * y;
                         db = g * x;
                     });
}

Tensor div(Tape& t, const Tensor& a, const Tensor& b) {
    for (double y : b.data) {
        if (y == 0.0) throw DomainError("div: division by zero");
    }
    return binary_op(t, a, b, "div",
                     [](double x, double y) { return x / y; },
                     [](double x, double y, double g, double& da, double& db) {
                         da = g / y;
                         db = -g * x / (y * y);
                     });
}

Tensor add(Tape& t, const Tensor& a, double c) {
    return unary_op(t, a, "add_scalar",
                    [c](double x) { return x + c; },
                    [](double, double, double g) { return g; });
}

Tensor scale(Tape& t, const Tensor& a, double c) {
    return unary_op(t, a, "scale",
                    [c](double x) { return x * c; },
                    [c](double, double, double g) { return g * c; });
}

Tensor relu(Tape& t, const Tensor& a) {
    // subgradient at 0 is 0
    return unary_op(t, a, "relu",
                    [](double x) { return x > 0.0 ? x : 0.0; },
                    [](double x, double, double g) { return x > 0.0 ? g : 0.0; });
}

Tensor clamp(Tape& t, const Tensor& a, double lo, double hi) {
    if (!(lo < hi)) throw ConfigError("clamp: lo must be below hi");
    return unary_op(t, a, "clamp",
                    [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
                    [lo, hi](double x, double, double g) { return (x < lo || x > hi) ? 0.0 : g; });
}

Tensor exp(Tape& t, const Tensor& a) {
    return unary_op(t, a, "exp",
                    [](double x) { return std::exp(x); },
                    [](double, double o, double g) { return g * o; });
}

Tensor log(Tape& t, const Tensor& a) {
    for (double x : a.data) {
        if (!(x > 0.0)) throw DomainError("log: operand must be strictly positive");
    }
    return unary_op(t, a, "log",
                    [](double x) { return std::log(x); },
                    [](double x, double, double g) { return g / x; });
}

Tensor sqrt(Tape& t, const Tensor& a) {
    for (double x : a.data) {
        if (!(x > 0.0)) throw DomainError("sqrt: operand must be strictly positive");
    }
    return unary_op(t, a, "sqrt",
                    [](double x) { return std::sqrt(x); },
                    [](double, double o, double g) { return g * 0.5 / o; });
}

Tensor sigmoid(Tape& t, const Tensor& a) {
    return unary_op(t, a, "sigmoid",
                    [](double x) {
                        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                        : std::exp(x) / (1.0 + std::exp(x));
                    },
                    [](double, double o, double g) { return g * o * (1.0 - o); });
}

// ---- softmax family ----------------------------------------------------------

Tensor softmax(Tape& t, const Tensor& z, double temperature) {
    if (!(temperature > 0.0)) throw ConfigError("softmax: temperature must be positive");
    check_tape(t, z, "softmax");
    require_rank2ish(z, "softmax");
    const std::size_t n = z.rows(), c = z.cols();
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = &z.data[i * c];
        double mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            out[i * c + j] = std::exp((row[j] - mx) / temperature);
            denom += out[i * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= denom;
    }
    BackwardFn fn;
    if (z.on_tape()) {
        fn = [zn = z.node, p = out, n, c, temperature](const std::vector<double>& g, GradSink& sink) {
            auto& gz = sink.at(zn);
            for (std::size_t i = 0; i < n; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * p[i * c + j];
                for (std::size_t j = 0; j < c; ++j) {
                    gz[i * c + j] += p[i * c + j] * (g[i * c + j] - dot) / temperature;
                }
            }
        };
    }
    return make_result(t, z.shape, std::move(out), z.on_tape(), std::move(fn), "softmax");
}

Tensor log_softmax(Tape& t, const Tensor& z, double temperature) {
    if (!(temperature > 0.0)) throw ConfigError("log_softmax: temperature must be positive");
    check_tape(t, z, "log_softmax");
    require_rank2ish(z, "log_softmax");
    const std::size_t n = z.rows(), c = z.cols();
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = &z.data[i * c];
        double mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) denom += std::exp((row[j] - mx) / temperature);
        const double lse = std::log(denom);
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = (row[j] - mx) / temperature - lse;
    }
    BackwardFn fn;
    if (z.on_tape()) {
        fn = [zn = z.node, ls = out, n, c, temperature](const std::vector<double>& g, GradSink& sink) {
            auto& gz = sink.at(zn);
            for (std::size_t i = 0; i < n; ++i) {
                double gsum = 0.0;
                for (std::size_t j = 0; j < c; ++j) gsum += g[i * c + j];
                for (std::size_t j = 0; j < c; ++j) {
                    gz[i * c + j] += (g[i * c + j] - std::exp(ls[i * c + j]) * gsum) / temperature;
                }
            }
        };
    }
    return make_result(t, z.shape, std::move(out), z.on_tape(), std::move(fn), "log_softmax");
}

Tensor stop_gradient(const Tensor& a) {
    Tensor out;
    out.shape = a.shape;
    out.data = a.data;
    return out; // node == -1: downstream ops treat it as a constant
}

Tensor softened_kl_rows(Tape& t, const Tensor& z_student, const Tensor& z_teacher,
                        double temperature, bool teacher_leads) {
    if (!(temperature > 0.0)) throw ConfigError("softened_kl_rows: temperature must be positive");
    check_tape(t, z_student, "softened_kl_rows");
    require_rank2ish(z_student, "softened_kl_rows");
    if (z_student.shape != z_teacher.shape) {
        throw DimensionError("softened_kl_rows: student " + shape_str(z_student.shape) +
                             " vs teacher " + shape_str(z_teacher.shape));
    }
    const std::size_t n = z_student.rows(), c = z_student.cols();

    auto log_probs = [&](const std::vector<double>& z, std::vector<double>& lp) {
        lp.resize(n * c);
        for (std::size_t i = 0; i < n; ++i) {
            double mx = z[i * c];
            for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, z[i * c + j]);
            double denom = 0.0;
            for (std::size_t j = 0; j < c; ++j) denom += std::exp((z[i * c + j] - mx) / temperature);
            const double lse = std::log(denom);
            for (std::size_t j = 0; j < c; ++j) lp[i * c + j] = (z[i * c + j] - mx) / temperature - lse;
        }
    };
    std::vector<double> lp_s, lp_t;
    log_probs(z_student.data, lp_s);
    log_probs(z_teacher.data, lp_t);

    std::vector<double> out(n, 0.0);
    const double t2 = temperature * temperature;
    for (std::size_t i = 0; i < n; ++i) {
        double kl = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double lead = teacher_leads ? lp_t[i * c + j] : lp_s[i * c + j];
            const double other = teacher_leads ? lp_s[i * c + j] : lp_t[i * c + j];
            kl += std::exp(lead) * (lead - other);
        }
        out[i] = t2 * kl;
    }

    BackwardFn fn;
    if (z_student.on_tape()) {
        fn = [zn = z_student.node, lp_s, lp_t, raw = out, n, c, t2, temperature, teacher_leads](
                 const std::vector<double>& g, GradSink& sink) {
            auto& gz = sink.at(zn);
            for (std::size_t i = 0; i < n; ++i) {
                const double w = g[i] * t2 / temperature;
                if (teacher_leads) {
                    // d/dz_s [KL(p_t || p_s)] = (p_s - p_t) / T
                    for (std::size_t j = 0; j < c; ++j) {
                        gz[i * c + j] += w * (std::exp(lp_s[i * c + j]) - std::exp(lp_t[i * c + j]));
                    }
                } else {
                    // d/dz_s [KL(p_s || p_t)] = p_s * ((lp_s - lp_t) - KL) / T
                    const double kl_row = raw[i] / t2;
                    for (std::size_t j = 0; j < c; ++j) {
                        const double diff = lp_s[i * c + j] - lp_t[i * c + j];
                        gz[i * c + j] += w * std::exp(lp_s[i * c + j]) * (diff - kl_row);
                    }
                }
            }
        };
    }
    return make_result(t, {n}, std::move(out), z_student.on_tape(), std::move(fn),
                       "softened_kl_rows");
}

// ---- reductions / structure ---------------------------------------------------

Tensor sum(Tape& t, const Tensor& a) {
    check_tape(t, a, "sum");
    double s = 0.0;
    for (double x : a.data) s += x;
    BackwardFn fn;
    if (a.on_tape()) {
        fn = [an = a.node, sz = a.size()](const std::vector<double>& g, GradSink& sink) {
            auto& ga = sink.at(an);
            for (std::size_t i = 0; i < sz; ++i) ga[i] += g[0];
        };
    }
    return make_result(t, {1}, {s}, a.on_tape(), std::move(fn), "sum");
}

Tensor mean(Tape& t, const Tensor& a) {
    if (a.size() == 0) throw DimensionError("mean: empty tensor");
    return scale(t, sum(t, a), 1.0 / static_cast<double>(a.size()));
}

Tensor sum_rows(Tape& t, const Tensor& a) {
    check_tape(t, a, "sum_rows");
    require_rank2ish(a, "sum_rows");
    const std::size_t n = a.rows(), c = a.cols();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i] += a.data[i * c + j];
    BackwardFn fn;
    if (a.on_tape()) {
        fn = [an = a.node, n, c](const std::vector<double>& g, GradSink& sink) {
            auto& ga = sink.at(an);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[i];
        };
    }
    return make_result(t, {n}, std::move(out), a.on_tape(), std::move(fn), "sum_rows");
}

Tensor sum_cols(Tape& t, const Tensor& a) {
    check_tape(t, a, "sum_cols");
    require_rank2ish(a, "sum_cols");
    const std::size_t n = a.rows(), c = a.cols();
    std::vector<double> out(c, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j] += a.data[i * c + j];
    BackwardFn fn;
    if (a.on_tape()) {
        fn = [an = a.node, n, c](const std::vector<double>& g, GradSink& sink) {
            auto& ga = sink.at(an);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j];
        };
    }
    return make_result(t, {c}, std::move(out), a.on_tape(), std::move(fn), "sum_cols");
}

Tensor take_per_row(Tape& t, const Tensor& a, const std::vector<int>& idx) {
    check_tape(t, a, "take_per_row");
    require_rank2ish(a, "take_per_row");
    const std::size_t n = a.rows(), c = a.cols();
    if (idx.size() != n) {
        throw DimensionError("take_per_row: index count " + std::to_string(idx.size()) +
                             " does not match rows " + std::to_string(n));
    }
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= c) {
            throw DataError("take_per_row: index " + std::to_string(idx[i]) + " out of range [0," +
                            std::to_string(c) + ")");
        }
        out[i] = a.data[i * c + static_cast<std::size_t>(idx[i])];
    }
    BackwardFn fn;
    if (a.on_tape()) {
        fn = [an = a.node, idx, c](const std::vector<double>& g, GradSink& sink) {
            auto& ga = sink.at(an);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i * c + static_cast<std::size_t>(idx[i])] += g[i];
            }
        };
    }
    return make_result(t, {n}, std::move(out), a.on_tape(), std::move(fn), "take_per_row");
}

Tensor add_rows(Tape& t, const Tensor& a, const Tensor& bias) {
    check_tape(t, a, "add_rows");
    check_tape(t, bias, "add_rows");
    require_rank2ish(a, "add_rows");
    const std::size_t n = a.rows(), c = a.cols();
    if (bias.shape.size() != 1 || bias.shape[0] != c) {
        throw DimensionError("add_rows: bias " + shape_str(bias.shape) + " does not match row width " +
                             std::to_string(c));
    }
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.data[i * c + j] + bias.data[j];
    BackwardFn fn;
    if (any_tracked(a, bias)) {
        fn = [an = a.node, bn = bias.node, n, c](const std::vector<double>& g, GradSink& sink) {
            if (an >= 0) {
                auto& ga = sink.at(an);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (bn >= 0) {
                auto& gb = sink.at(bn);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
            }
        };
    }
    return make_result(t, a.shape, std::move(out), any_tracked(a, bias), std::move(fn), "add_rows");
}

Tensor reshape(Tape& t, const Tensor& a, Shape s) {
    check_tape(t, a, "reshape");
    if (shape_numel(s) != a.size()) {
        throw DimensionError("reshape: " + shape_str(a.shape) + " cannot become " + shape_str(s));
    }
    BackwardFn fn;
    if (a.on_tape()) {
        fn = [an = a.node](const std::vector<double>& g, GradSink& sink) {
            auto& ga = sink.at(an);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        };
    }
    return make_result(t, std::move(s), a.data, a.on_tape(), std::move(fn), "reshape");
}

Tensor select_row(Tape& t, const Tensor& a, std::size_t row) {
    check_tape(t, a, "select_row");
    require_rank2ish(a, "select_row");
    const std::size_t n = a.rows(), c = a.cols();
    if (row >= n) throw DimensionError("select_row: row " + std::to_string(row) + " out of range");
    std::vector<double> out(a.data.begin() + static_cast<std::ptrdiff_t>(row * c),
                            a.data.begin() + static_cast<std::ptrdiff_t>((row + 1) * c));
    BackwardFn fn;
    if (a.on_tape()) {
        fn = [an = a.node, row, c](const std::vector<double>& g, GradSink& sink) {
            auto& ga = sink.at(an);
            for (std::size_t j = 0; j < c; ++j) ga[row * c + j] += g[j];
        };
    }
    return make_result(t, {c}, std::move(out), a.on_tape(), std::move(fn), "select_row");
}

Tensor slice_cols(Tape& t, const Tensor& a, std::size_t c0, std::size_t c1) {
    check_tape(t, a, "slice_cols");
    require_rank2ish(a, "slice_cols");
    const std::size_t n = a.rows(), c = a.cols();
    if (c0 >= c1 || c1 > c) {
        throw DimensionError("slice_cols: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                             ") invalid for width " + std::to_string(c));
    }
    const std::size_t w = c1 - c0;
    std::vector<double> out(n * w);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = a.data[i * c + c0 + j];
    BackwardFn fn;
    if (a.on_tape()) {
        fn = [an = a.node, n, c, c0, w](const std::vector<double>& g, GradSink& sink) {
            auto& ga = sink.at(an);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < w; ++j) ga[i * c + c0 + j] += g[i * w + j];
        };
    }
    return make_result(t, {n, w}, std::move(out), a.on_tape(), std::move(fn), "slice_cols");
}

Tensor stack_scalars(Tape& t, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("stack_scalars: no parts");
    std::vector<double> out(parts.size());
    std::vector<int> nodes(parts.size());
    bool tracked = false;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        check_tape(t, parts[i], "stack_scalars");
        if (parts[i].size() != 1) throw DimensionError("stack_scalars: part is not scalar");
        out[i] = parts[i].data[0];
        nodes[i] = parts[i].node;
        tracked = tracked || parts[i].on_tape();
    }
    BackwardFn fn;
    if (tracked) {
        fn = [nodes](const std::vector<double>& g, GradSink& sink) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (nodes[i] >= 0) sink.at(nodes[i])[0] += g[i];
            }
        };
    }
    return make_result(t, {parts.size()}, std::move(out), tracked, std::move(fn), "stack_scalars");
}

} // namespace bikd
