#include "bikd/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bikd/errors.hpp"

namespace bikd {

double pearson(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size() || p.size() < 2) {
        throw DimensionError("pearson: inputs must match and hold at least 2 values");
    }
    const auto n = static_cast<double>(p.size());
    double mp = 0.0, mq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        mp += p[i];
        mq += q[i];
    }
    mp /= n;
    mq /= n;
    double cov = 0.0, vp = 0.0, vq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        cov += (p[i] - mp) * (q[i] - mq);
        vp += (p[i] - mp) * (p[i] - mp);
        vq += (q[i] - mq) * (q[i] - mq);
    }
    if (vp <= 1e-30 || vq <= 1e-30) {
        throw DegenerateInputError("pearson: constant input; correlation undefined");
    }
    return cov / std::sqrt(vp * vq);
}

double classification_top1(const Tensor& logits, const std::vector<int>& labels) {
    const std::size_t n = logits.rows(), c = logits.cols();
    if (labels.size() != n) throw DimensionError("classification_top1: label count mismatch");
    if (n == 0) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < c; ++j) {
            if (logits.at(i, j) > logits.at(i, best)) best = j;
        }
        if (static_cast<int>(best) == labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

SegMetrics segmentation_metrics(const std::vector<int>& pred, const std::vector<int>& gt,
                                std::size_t classes) {
    if (pred.size() != gt.size()) throw DimensionError("segmentation_metrics: size mismatch");
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] < 0 || gt[i] < 0 || static_cast<std::size_t>(pred[i]) >= classes ||
            static_cast<std::size_t>(gt[i]) >= classes) {
            throw DataError("segmentation_metrics: label outside [0,classes)");
        }
    }
    std::vector<std::size_t> confusion(classes * classes, 0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        confusion[static_cast<std::size_t>(gt[i]) * classes + static_cast<std::size_t>(pred[i])] += 1;
    }
    SegMetrics m;
    double iou_sum = 0.0, acc_sum = 0.0, fw_sum = 0.0;
    std::size_t present = 0, correct = 0;
    const auto total = static_cast<double>(pred.size());
    for (std::size_t c = 0; c < classes; ++c) {
        std::size_t tp = confusion[c * classes + c];
        std::size_t gt_count = 0, pred_count = 0;
        for (std::size_t j = 0; j < classes; ++j) {
            gt_count += confusion[c * classes + j];
            pred_count += confusion[j * classes + c];
        }
        correct += tp;
        if (gt_count == 0) continue;
        ++present;
        const double denom = static_cast<double>(gt_count + pred_count - tp);
        const double iou = denom > 0 ? static_cast<double>(tp) / denom : 0.0;
        iou_sum += iou;
        acc_sum += static_cast<double>(tp) / static_cast<double>(gt_count);
        fw_sum += (static_cast<double>(gt_count) / total) * iou;
    }
    if (present == 0) throw DataError("segmentation_metrics: empty ground truth");
    m.miou = iou_sum / static_cast<double>(present);
    m.macc = acc_sum / static_cast<double>(present);
    m.fwiou = fw_sum;
    m.pacc = static_cast<double>(correct) / total;
    return m;
}

SaliencyMetrics saliency_metrics(const std::vector<double>& pred, const std::vector<double>& gt_map,
                                 const std::vector<std::pair<int, int>>& fixations, std::size_t grid) {
    if (pred.size() != grid * grid || gt_map.size() != grid * grid) {
        throw DimensionError("saliency_metrics: map size does not match grid");
    }
    if (fixations.empty()) throw DegenerateInputError("saliency_metrics: no fixations for NSS");
    SaliencyMetrics m;
    m.cc = pearson(pred, gt_map);

    const auto n = static_cast<double>(pred.size());
    double mean = 0.0;
    for (double v : pred) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : pred) var += (v - mean) * (v - mean);
    var /= n;
    if (var <= 1e-30) throw DegenerateInputError("saliency_metrics: constant prediction");
    const double sd = std::sqrt(var);

    double nss = 0.0;
    for (auto [r, c] : fixations) {
        if (r < 0 || c < 0 || static_cast<std::size_t>(r) >= grid || static_cast<std::size_t>(c) >= grid) {
            throw DataError("saliency_metrics: fixation outside the grid");
        }
        nss += (pred[static_cast<std::size_t>(r) * grid + static_cast<std::size_t>(c)] - mean) / sd;
    }
    m.nss = nss / static_cast<double>(fixations.size());
    return m;
}

// ---- CCA ------------------------------------------------------------------------

namespace {

// cyclic Jacobi eigendecomposition of a symmetric matrix; eigvecs columns
void jacobi_eigen(std::vector<double> a, std::size_t n, std::vector<double>& eigvals,
                  std::vector<double>& eigvecs) {
    eigvecs.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) eigvecs[i * n + i] = 1.0;
    for (int sweep = 0; sweep < 128; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
        if (off < 1e-26) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (std::fabs(apq) < 1e-300) continue;
                const double app = a[p * n + p], aqq = a[q * n + q];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double cs = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * cs;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = cs * akp - sn * akq;
                    a[k * n + q] = sn * akp + cs * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k], aqk = a[q * n + k];
                    a[p * n + k] = cs * apk - sn * aqk;
                    a[q * n + k] = sn * apk + cs * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = eigvecs[k * n + p], vkq = eigvecs[k * n + q];
                    eigvecs[k * n + p] = cs * vkp - sn * vkq;
                    eigvecs[k * n + q] = sn * vkp + cs * vkq;
                }
            }
        }
    }
    eigvals.resize(n);
    for (std::size_t i = 0; i < n; ++i) eigvals[i] = a[i * n + i];
}

std::vector<double> mat_mul(const std::vector<double>& a, std::size_t ar, std::size_t ac,
                            const std::vector<double>& b, std::size_t bc) {
    std::vector<double> out(ar * bc, 0.0);
    for (std::size_t i = 0; i < ar; ++i)
        for (std::size_t k = 0; k < ac; ++k) {
            const double aik = a[i * ac + k];
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < bc; ++j) out[i * bc + j] += aik * b[k * bc + j];
        }
    return out;
}

// symmetric inverse square root via eigendecomposition
std::vector<double> inv_sqrt_sym(const std::vector<double>& c, std::size_t n) {
    std::vector<double> eigvals, eigvecs;
    jacobi_eigen(c, n, eigvals, eigvecs);
    for (double l : eigvals) {
        if (!(l > 0.0) || !std::isfinite(l)) {
            throw NumericError("cca: covariance not positive definite after ridge");
        }
    }
    std::vector<double> out(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                s += eigvecs[i * n + k] * eigvecs[j * n + k] / std::sqrt(eigvals[k]);
            }
            out[i * n + j] = s;
        }
    return out;
}

std::vector<double> center_columns(const Tensor& x) {
    const std::size_t n = x.shape[0], f = x.shape[1];
    std::vector<double> out(x.data);
    for (std::size_t j = 0; j < f; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) m += out[i * f + j];
        m /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) out[i * f + j] -= m;
    }
    return out;
}

} // namespace

CcaSummary cca(const Tensor& features_a, const Tensor& features_b, std::size_t k, double ridge) {
    if (features_a.shape.size() != 2 || features_b.shape.size() != 2 ||
        features_a.shape[0] != features_b.shape[0]) {
        throw DimensionError("cca: feature matrices must be [n x f] with matching n");
    }
    const std::size_t n = features_a.shape[0];
    const std::size_t fa = features_a.shape[1], fb = features_b.shape[1];
    if (n <= std::max(fa, fb)) {
        throw DimensionError("cca: need more samples than features");
    }
    if (k == 0 || k > std::min(fa, fb)) {
        throw ConfigError("cca: k must lie in [1, min(fa, fb)]");
    }

    const auto ac = center_columns(features_a);
    const auto bc = center_columns(features_b);
    const double denom = static_cast<double>(n - 1);

    auto covariance = [&](const std::vector<double>& x, std::size_t fx, const std::vector<double>& y,
                          std::size_t fy) {
        std::vector<double> c(fx * fy, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < fx; ++p) {
                const double v = x[i * fx + p];
                if (v == 0.0) continue;
                for (std::size_t q = 0; q < fy; ++q) c[p * fy + q] += v * y[i * fy + q];
            }
        for (auto& v : c) v /= denom;
        return c;
    };

    auto caa = covariance(ac, fa, ac, fa);
    auto cbb = covariance(bc, fb, bc, fb);
    auto cab = covariance(ac, fa, bc, fb);
    for (std::size_t i = 0; i < fa; ++i) caa[i * fa + i] += ridge;
    for (std::size_t i = 0; i < fb; ++i) cbb[i * fb + i] += ridge;

    const auto isa = inv_sqrt_sym(caa, fa);
    const auto isb = inv_sqrt_sym(cbb, fb);
    const auto m = mat_mul(mat_mul(isa, fa, fa, cab, fb), fa, fb, isb, fb); // fa x fb

    // right singular vectors of m from the eigendecomposition of m^T m
    std::vector<double> mtm(fb * fb, 0.0);
    for (std::size_t p = 0; p < fb; ++p)
        for (std::size_t q = 0; q < fb; ++q) {
            double s = 0.0;
            for (std::size_t r = 0; r < fa; ++r) s += m[r * fb + p] * m[r * fb + q];
            mtm[p * fb + q] = s;
        }
    std::vector<double> eigvals, eigvecs;
    jacobi_eigen(mtm, fb, eigvals, eigvecs);
    std::vector<std::size_t> order(fb);
    for (std::size_t i = 0; i < fb; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return eigvals[x] > eigvals[y];
    });

    CcaSummary summary;
    summary.k = k;
    for (std::size_t rank = 0; rank < k; ++rank) {
        const std::size_t col = order[rank];
        const double sigma = std::sqrt(std::max(eigvals[col], 0.0));
        if (sigma < 1e-12) {
            summary.correlations.push_back(0.0);
            continue;
        }
        // canonical directions in the original spaces
        std::vector<double> v(fb);
        for (std::size_t i = 0; i < fb; ++i) v[i] = eigvecs[i * fb + col];
        std::vector<double> wb = mat_mul(isb, fb, fb, v, 1);
        std::vector<double> u = mat_mul(m, fa, fb, v, 1);
        for (auto& x : u) x /= sigma;
        std::vector<double> wa = mat_mul(isa, fa, fa, u, 1);

        // correlation of the canonical variates themselves
        std::vector<double> pa(n, 0.0), pb(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < fa; ++j) pa[i] += ac[i * fa + j] * wa[j];
            for (std::size_t j = 0; j < fb; ++j) pb[i] += bc[i * fb + j] * wb[j];
        }
        double corr = 0.0;
        try {
            corr = std::fabs(pearson(pa, pb));
        } catch (const DegenerateInputError&) {
            corr = 0.0;
        }
        summary.correlations.push_back(std::clamp(corr, 0.0, 1.0));
    }
    std::sort(summary.correlations.begin(), summary.correlations.end(), std::greater<>());
    double total = 0.0;
    for (double v : summary.correlations) total += v;
    summary.mean_top_k = total / static_cast<double>(k);
    return summary;
}

double recovered(double before, double after, double ensemble) {
    const double denom = ensemble - before;
    if (denom == 0.0) {
        throw DegenerateInputError("recovered: ensemble equals the pretrained metric");
    }
    return (after - before) / denom;
}

// ---- model evaluation -------------------------------------------------------------

namespace {

Tensor eval_inputs(const DatasetHandle& data, const Split& split) {
    const std::size_t n = split.size();
    const std::size_t width = data.sample_dim();
    std::vector<double> xv(n * width);
    const bool flat = data.spec.task == TaskKind::Classification;
    for (std::size_t i = 0; i < n; ++i) {
        const double* src = flat ? &data.x[(split.begin + i) * width] : &data.dense_x[(split.begin + i) * width];
        std::copy(src, src + width, &xv[i * width]);
    }
    if (flat) return Tensor::constant({n, width}, std::move(xv));
    return Tensor::constant({n, data.spec.grid, data.spec.grid, data.spec.channels}, std::move(xv));
}

std::vector<int> eval_labels(const DatasetHandle& data, const Split& split) {
    return {data.y.begin() + static_cast<std::ptrdiff_t>(split.begin),
            data.y.begin() + static_cast<std::ptrdiff_t>(split.end)};
}

std::vector<double> softmax_rows_plain(const Tensor& z) {
    const std::size_t n = z.rows(), c = z.cols();
    std::vector<double> p(n * c);
    for (std::size_t i = 0; i < n; ++i) {
        double mx = z.at(i, 0);
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, z.at(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            p[i * c + j] = std::exp(z.at(i, j) - mx);
            denom += p[i * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) p[i * c + j] /= denom;
    }
    return p;
}

inline double sigmoid_plain(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// per-pixel labels from averaged dense outputs over any number of models
std::vector<int> dense_predictions_from_logits(const std::vector<const Tensor*>& outputs,
                                               std::size_t classes) {
    const auto& shape = outputs.front()->shape; // [n, g, g, classes+1]
    const std::size_t n = shape[0], px = shape[1] * shape[2], ch = shape[3];
    std::vector<int> pred(n * px, 0);
    for (std::size_t i = 0; i < n; ++i) {
        // image-level class: mean over pixels and models of class-channel softmax
        std::vector<double> cls_score(classes, 0.0);
        for (const Tensor* out : outputs) {
            for (std::size_t p = 0; p < px; ++p) {
                const double* row = &out->data[(i * px + p) * ch];
                double mx = row[0];
                for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
                double denom = 0.0;
                for (std::size_t c = 0; c < classes; ++c) denom += std::exp(row[c] - mx);
                for (std::size_t c = 0; c < classes; ++c) {
                    cls_score[c] += std::exp(row[c] - mx) / denom;
                }
            }
        }
        std::size_t best = 0;
        for (std::size_t c = 1; c < classes; ++c) {
            if (cls_score[c] > cls_score[best]) best = c;
        }
        for (std::size_t p = 0; p < px; ++p) {
            double mask_prob = 0.0;
            for (const Tensor* out : outputs) {
                mask_prob += sigmoid_plain(out->data[(i * px + p) * ch + classes]);
            }
            mask_prob /= static_cast<double>(outputs.size());
            pred[i * px + p] = mask_prob > 0.5 ? static_cast<int>(best) : 0;
        }
    }
    return pred;
}

} // namespace

std::vector<int> dense_predictions(const ModelBundle& model, const DatasetHandle& data,
                                   const Split& split) {
    auto out = forward_eval(model, eval_inputs(data, split));
    return dense_predictions_from_logits({&out.logits}, data.spec.classes);
}

std::vector<std::pair<std::string, double>> evaluate_model(const ModelBundle& model,
                                                            const DatasetHandle& data,
                                                            const Split& split,
                                                            const std::vector<unsigned char>* view) {
    Tensor inputs = eval_inputs(data, split);
    if (view) inputs = apply_view(data, inputs, *view);
    switch (data.spec.task) {
        case TaskKind::Classification: {
            auto out = forward_eval(model, inputs);
            return {{"top1", classification_top1(out.logits, eval_labels(data, split))}};
        }
        case TaskKind::DenseSeg: {
            auto out = forward_eval(model, inputs);
            const Tensor* lp = &out.logits;
            auto pred = dense_predictions_from_logits({lp}, data.spec.classes);
            std::vector<int> gt(data.pixel_labels.begin() +
                                    static_cast<std::ptrdiff_t>(split.begin * data.spec.grid * data.spec.grid),
                                data.pixel_labels.begin() +
                                    static_cast<std::ptrdiff_t>(split.end * data.spec.grid * data.spec.grid));
            auto m = segmentation_metrics(pred, gt, data.spec.classes);
            return {{"mIoU", m.miou}, {"fwIoU", m.fwiou}, {"mACC", m.macc}, {"pACC", m.pacc}};
        }
        case TaskKind::Saliency: {
            auto out = forward_eval(model, inputs);
            const std::size_t px = data.spec.grid * data.spec.grid;
            double cc_sum = 0.0, nss_sum = 0.0;
            for (std::size_t i = 0; i < split.size(); ++i) {
                std::vector<double> pred(out.logits.data.begin() + static_cast<std::ptrdiff_t>(i * px),
                                         out.logits.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * px));
                std::vector<double> gt(data.maps.begin() + static_cast<std::ptrdiff_t>((split.begin + i) * px),
                                       data.maps.begin() + static_cast<std::ptrdiff_t>((split.begin + i + 1) * px));
                auto m = saliency_metrics(pred, gt, data.fixation_points[split.begin + i], data.spec.grid);
                cc_sum += m.cc;
                nss_sum += m.nss;
            }
            const auto n = static_cast<double>(split.size());
            return {{"CC", cc_sum / n}, {"NSS", nss_sum / n}};
        }
    }
    throw ConfigError("evaluate_model: unknown task");
}

Tensor tap_features(const ModelBundle& model, const DatasetHandle& data, const Split& split) {
    auto out = forward_eval(model, eval_inputs(data, split));
    return out.features;
}

double ensemble_eval(const std::vector<const ModelBundle*>& models, const DatasetHandle& data,
                     const Split& split) {
    if (models.size() < 2) throw ConfigError("ensemble_eval: need at least 2 models");
    for (const auto* m : models) {
        if (m->arch.head != models.front()->arch.head ||
            m->arch.input_dim != models.front()->arch.input_dim) {
            throw ConfigError("ensemble_eval: models must share task and input shape");
        }
    }
    auto inputs = eval_inputs(data, split);
    switch (data.spec.task) {
        case TaskKind::Classification: {
            std::vector<double> mean_probs;
            for (const auto* m : models) {
                auto out = forward_eval(*m, inputs);
                auto probs = softmax_rows_plain(out.logits);
                if (mean_probs.empty()) {
                    mean_probs = std::move(probs);
                } else {
                    for (std::size_t i = 0; i < probs.size(); ++i) mean_probs[i] += probs[i];
                }
            }
            for (auto& v : mean_probs) v /= static_cast<double>(models.size());
            Tensor avg({split.size(), data.spec.classes}, std::move(mean_probs));
            return classification_top1(avg, eval_labels(data, split));
        }
        case TaskKind::DenseSeg: {
            std::vector<ForwardResult> outs;
            std::vector<const Tensor*> ptrs;
            outs.reserve(models.size());
            for (const auto* m : models) outs.push_back(forward_eval(*m, inputs));
            for (const auto& o : outs) ptrs.push_back(&o.logits);
            auto pred = dense_predictions_from_logits(ptrs, data.spec.classes);
            std::vector<int> gt(data.pixel_labels.begin() +
                                    static_cast<std::ptrdiff_t>(split.begin * data.spec.grid * data.spec.grid),
                                data.pixel_labels.begin() +
                                    static_cast<std::ptrdiff_t>(split.end * data.spec.grid * data.spec.grid));
            return segmentation_metrics(pred, gt, data.spec.classes).miou;
        }
        case TaskKind::Saliency: {
            std::vector<double> mean_map;
            for (const auto* m : models) {
                auto out = forward_eval(*m, inputs);
                if (mean_map.empty()) {
                    mean_map = out.logits.data;
                } else {
                    for (std::size_t i = 0; i < mean_map.size(); ++i) mean_map[i] += out.logits.data[i];
                }
            }
            for (auto& v : mean_map) v /= static_cast<double>(models.size());
            const std::size_t px = data.spec.grid * data.spec.grid;
            double cc_sum = 0.0;
            for (std::size_t i = 0; i < split.size(); ++i) {
                std::vector<double> pred(mean_map.begin() + static_cast<std::ptrdiff_t>(i * px),
                                         mean_map.begin() + static_cast<std::ptrdiff_t>((i + 1) * px));
                std::vector<double> gt(data.maps.begin() + static_cast<std::ptrdiff_t>((split.begin + i) * px),
                                       data.maps.begin() + static_cast<std::ptrdiff_t>((split.begin + i + 1) * px));
                cc_sum += pearson(pred, gt);
            }
            return cc_sum / static_cast<double>(split.size());
        }
    }
    throw ConfigError("ensemble_eval: unknown task");
}

} // namespace bikd
