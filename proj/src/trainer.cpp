#include "bikd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "bikd/analysis.hpp"
#include "bikd/errors.hpp"
#include "bikd/rng.hpp"

namespace bikd {

std::string method_name(Method m) {
    switch (m) {
        case Method::BiKd: return "bi-kd";
        case Method::MultiKd: return "multi-kd";
        case Method::VanillaKd: return "vanilla-kd";
        case Method::FixedPartitionKd: return "fixed-partition-kd";
        case Method::SoloFinetune: return "solo-finetune";
    }
    throw ConfigError("unknown method");
}

Method method_from(const std::string& name) {
    if (name == "bi-kd") return Method::BiKd;
    if (name == "multi-kd") return Method::MultiKd;
    if (name == "vanilla-kd") return Method::VanillaKd;
    if (name == "fixed-partition-kd") return Method::FixedPartitionKd;
    if (name == "solo-finetune") return Method::SoloFinetune;
    throw ConfigError("unknown method: " + name);
}

void TransferConfig::validate(std::size_t model_count) const {
    weights.validate();
    if (!(learning_rate > 0.0)) throw ConfigError("transfer: learning rate must be positive");
    if (weight_decay < 0.0) throw ConfigError("transfer: weight decay must be nonnegative");
    if (batch_size < 1) throw ConfigError("transfer: batch size must be at least 1");
    switch (method) {
        case Method::BiKd:
        case Method::VanillaKd:
        case Method::FixedPartitionKd:
            if (model_count != 2) {
                throw ConfigError("transfer: " + method_name(method) + " takes exactly 2 models");
            }
            break;
        case Method::MultiKd:
            if (model_count < 2) throw ConfigError("transfer: multi-kd needs at least 2 models");
            break;
        case Method::SoloFinetune:
            if (model_count < 1) throw ConfigError("transfer: no models given");
            break;
    }
    if (partition_rule == PartitionRule::Confidence && task != TaskKind::Classification &&
        method != Method::SoloFinetune) {
        throw ConfigError("transfer: the confidence rule needs ground-truth class probabilities; "
                          "use the loss rule for dense tasks");
    }
}

// ---- Adam ---------------------------------------------------------------------

Adam::Adam(const ModelBundle& model, double learning_rate, double weight_decay)
    : lr_(learning_rate), wd_(weight_decay) {
    m_.reserve(model.params.size());
    v_.reserve(model.params.size());
    for (const auto& p : model.params) {
        m_.emplace_back(p.data.size(), 0.0);
        v_.emplace_back(p.data.size(), 0.0);
    }
}

void Adam::step(ModelBundle& model, const BoundModel& bound, const Gradients& grads) {
    if (bound.params.size() != model.params.size() || m_.size() != model.params.size()) {
        throw ContractError("adam: parameter layout mismatch");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t p = 0; p < model.params.size(); ++p) {
        const auto& g = grads.at(bound.params[p].node);
        auto& theta = model.params[p].data;
        auto& m = m_[p];
        auto& v = v_[p];
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            theta[i] -= lr_ * (m_hat / (std::sqrt(v_hat) + eps_) + wd_ * theta[i]);
        }
    }
}

// ---- task forward -----------------------------------------------------------------

namespace {

struct TaskForward {
    Tensor logits;     // task-shaped head output
    Tensor per_sample; // [B] task losses on the tape
};

TaskForward forward_task(Tape& t, const BoundModel& bm, const Batch& batch,
                         const DatasetHandle& data, const TransferConfig& cfg) {
    switch (cfg.task) {
        case TaskKind::Classification: {
            auto out = forward_classifier(t, bm, batch.x);
            return {out.logits, cross_entropy_per_sample(t, out.logits, batch.labels)};
        }
        case TaskKind::DenseSeg: {
            auto out = forward_dense(t, bm, batch.x);
            const std::size_t b = batch.x.shape[0];
            const std::size_t px = data.spec.grid * data.spec.grid;
            const std::size_t classes = data.spec.classes;
            const std::size_t ch = classes + 1;
            Tensor z2d = reshape(t, out.logits, {b, px * ch});
            std::vector<Tensor> each;
            each.reserve(b);
            for (std::size_t i = 0; i < b; ++i) {
                Tensor px_mat = reshape(t, select_row(t, z2d, i), {px, ch});
                Tensor cls_ch = slice_cols(t, px_mat, 0, classes);
                Tensor mask_ch = reshape(t, slice_cols(t, px_mat, classes, ch), {px});
                Tensor z_cls = scale(t, sum_cols(t, cls_ch), 1.0 / static_cast<double>(px));
                Tensor mask_p = clamp(t, sigmoid(t, mask_ch), 1e-12, 1.0 - 1e-12);
                const std::size_t idx = batch.indices[i];
                Tensor y_mask = Tensor::constant(
                    {px}, std::vector<double>(
                              data.region_mask.begin() + static_cast<std::ptrdiff_t>(idx * px),
                              data.region_mask.begin() + static_cast<std::ptrdiff_t>((idx + 1) * px)));
                each.push_back(semseg_loss(t, z_cls, mask_p, batch.labels[i], y_mask, cfg.weights));
            }
            return {out.logits, stack_scalars(t, each)};
        }
        case TaskKind::Saliency: {
            auto out = forward_dense(t, bm, batch.x);
            const std::size_t b = batch.x.shape[0];
            const std::size_t px = data.spec.grid * data.spec.grid;
            Tensor flat = reshape(t, out.logits, {b, px});
            std::vector<Tensor> each;
            each.reserve(b);
            for (std::size_t i = 0; i < b; ++i) {
                const std::size_t idx = batch.indices[i];
                Tensor gt = Tensor::constant(
                    {px}, std::vector<double>(
                              data.maps.begin() + static_cast<std::ptrdiff_t>(idx * px),
                              data.maps.begin() + static_cast<std::ptrdiff_t>((idx + 1) * px)));
                each.push_back(vsp_loss(t, select_row(t, flat, i), gt, cfg.weights));
            }
            return {out.logits, stack_scalars(t, each)};
        }
    }
    throw ConfigError("forward_task: unknown task");
}

// per-sample distillation divergence, teacher branch constant: [B]
Tensor distill_pair(Tape& t, const TaskForward& student, const TaskForward& teacher,
                    const DatasetHandle& data, const TransferConfig& cfg) {
    const double temp = cfg.weights.temperature;
    switch (cfg.task) {
        case TaskKind::Classification:
            return kl_distill_per_sample(t, student.logits, teacher.logits, temp, cfg.kl_direction);
        case TaskKind::DenseSeg: {
            const std::size_t b = student.logits.shape[0];
            const std::size_t px = data.spec.grid * data.spec.grid;
            const std::size_t ch = data.spec.classes + 1;
            Tensor s2 = reshape(t, student.logits, {b * px, ch});
            Tensor t2 = reshape(t, teacher.logits, {b * px, ch});
            Tensor per_px = kl_distill_per_sample(t, s2, t2, temp, cfg.kl_direction);
            return scale(t, sum_rows(t, reshape(t, per_px, {b, px})), 1.0 / static_cast<double>(px));
        }
        case TaskKind::Saliency: {
            const std::size_t b = student.logits.shape[0];
            const std::size_t px = data.spec.grid * data.spec.grid;
            Tensor s_flat = reshape(t, student.logits, {b, px});
            std::vector<Tensor> each;
            each.reserve(b);
            for (std::size_t i = 0; i < b; ++i) {
                // teacher map, sum-normalized; sigmoid outputs are never zero
                std::vector<double> q(px);
                double total = 0.0;
                for (std::size_t p = 0; p < px; ++p) {
                    q[p] = teacher.logits.data[i * px + p];
                    total += q[p];
                }
                std::vector<double> log_q(px);
                for (std::size_t p = 0; p < px; ++p) {
                    q[p] /= total;
                    log_q[p] = std::log(q[p]);
                }
                Tensor qt = Tensor::constant({px}, q);
                Tensor lqt = Tensor::constant({px}, log_q);
                Tensor s_row = select_row(t, s_flat, i);
                Tensor pn = div(t, s_row, sum(t, s_row));
                Tensor kl = sum(t, mul(t, qt, sub(t, lqt, log(t, pn))));
                each.push_back(scale(t, kl, temp * temp));
            }
            return stack_scalars(t, each);
        }
    }
    throw ConfigError("distill_pair: unknown task");
}

PartitionMask build_masks(const std::vector<TaskForward>& fw, const Batch& batch,
                          const TransferConfig& cfg, bool pairwise_rule) {
    const std::size_t k = fw.size();
    const std::size_t n = batch.indices.size();
    if (cfg.partition_rule == PartitionRule::Confidence) {
        if (pairwise_rule && k == 2) {
            return confidence_masks(fw[0].logits, fw[1].logits, batch.labels);
        }
        std::vector<double> grid(n * k);
        for (std::size_t m = 0; m < k; ++m) {
            auto probs = gt_probabilities(fw[m].logits, batch.labels);
            for (std::size_t i = 0; i < n; ++i) grid[i * k + m] = probs[i];
        }
        return multi_masks(grid, n, k);
    }
    // loss rule
    if (pairwise_rule && k == 2) {
        std::vector<double> losses(n * 2);
        for (std::size_t i = 0; i < n; ++i) {
            losses[i * 2] = fw[0].per_sample.data[i];
            losses[i * 2 + 1] = fw[1].per_sample.data[i];
        }
        return loss_masks(losses, n);
    }
    // K-model analogue of the loss rule: argmin, ties to the lowest index
    PartitionMask mask;
    mask.n = n;
    mask.k = k;
    mask.rule = PartitionRule::Loss;
    mask.tie_note = "ties assigned to the lowest model index";
    mask.assign.assign(n * k, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t m = 1; m < k; ++m) {
            if (fw[m].per_sample.data[i] < fw[best].per_sample.data[i]) best = m;
        }
        mask.assign[i * k + best] = 1;
    }
    return mask;
}

// shared core of bi_kd_step and multi_kd_step; bi differs only in the K=2
// tie rule applied while building the masks
StepResult masked_kd_step(const std::vector<ModelBundle*>& models, const Batch& batch,
                          const DatasetHandle& data, const TransferConfig& cfg,
                          std::vector<Adam*>& opts, bool pairwise_rule) {
    const std::size_t k = models.size();
    const std::size_t b = batch.indices.size();
    Tape t;
    std::vector<BoundModel> bound;
    std::vector<TaskForward> fw;
    bound.reserve(k);
    fw.reserve(k);
    for (auto* m : models) {
        bound.push_back(bind(t, *m, true));
        fw.push_back(forward_task(t, bound.back(), batch, data, cfg));
    }

    PartitionMask mask = build_masks(fw, batch, cfg, pairwise_rule);

    std::vector<Tensor> dist_terms;
    for (std::size_t teacher = 0; teacher < k; ++teacher) {
        Tensor mask_col = Tensor::constant({b}, mask.column(teacher));
        for (std::size_t student = 0; student < k; ++student) {
            if (student == teacher) continue;
            Tensor kl = distill_pair(t, fw[student], fw[teacher], data, cfg);
            dist_terms.push_back(sum(t, mul(t, kl, mask_col)));
        }
    }
    Tensor dist = dist_terms.front();
    for (std::size_t i = 1; i < dist_terms.size(); ++i) dist = add(t, dist, dist_terms[i]);
    dist = scale(t, dist, 1.0 / static_cast<double>(b));

    StepResult result;
    result.mask = mask;
    Tensor total = mean(t, fw[0].per_sample);
    result.task_loss.push_back(total.item());
    for (std::size_t m = 1; m < k; ++m) {
        Tensor task_m = mean(t, fw[m].per_sample);
        result.task_loss.push_back(task_m.item());
        total = add(t, total, task_m);
    }
    total = add(t, total, dist);
    result.dist_loss = dist.item();
    result.total_loss = total.item();

    Gradients grads = t.backward(total);
    for (std::size_t m = 0; m < k; ++m) opts[m]->step(*models[m], bound[m], grads);
    return result;
}

} // namespace

StepResult bi_kd_step(ModelBundle& m1, ModelBundle& m2, const Batch& batch,
                      const DatasetHandle& data, const TransferConfig& cfg, Adam& opt1, Adam& opt2) {
    std::vector<ModelBundle*> models{&m1, &m2};
    std::vector<Adam*> opts{&opt1, &opt2};
    return masked_kd_step(models, batch, data, cfg, opts, true);
}

StepResult multi_kd_step(const std::vector<ModelBundle*>& models, const Batch& batch,
                         const DatasetHandle& data, const TransferConfig& cfg,
                         std::vector<Adam>& opts) {
    if (opts.size() != models.size()) throw ContractError("multi_kd_step: optimizer count mismatch");
    std::vector<Adam*> opt_ptrs;
    for (auto& o : opts) opt_ptrs.push_back(&o);
    return masked_kd_step(models, batch, data, cfg, opt_ptrs, false);
}

StepResult vanilla_kd_step(ModelBundle& student, const ModelBundle& frozen_teacher,
                           const Batch& batch, const DatasetHandle& data, const TransferConfig& cfg,
                           Adam& opt) {
    Tape t;
    BoundModel bs = bind(t, student, true);
    TaskForward fw_s = forward_task(t, bs, batch, data, cfg);
    BoundModel bt = bind(t, frozen_teacher, false);
    TaskForward fw_t = forward_task(t, bt, batch, data, cfg);

    Tensor kl = mean(t, distill_pair(t, fw_s, fw_t, data, cfg));
    Tensor task = mean(t, fw_s.per_sample);
    Tensor total = add(t, task, kl);

    StepResult result;
    result.task_loss = {task.item(), 0.0};
    result.dist_loss = kl.item();
    result.total_loss = total.item();

    Gradients grads = t.backward(total);
    opt.step(student, bs, grads);
    return result;
}

StepResult fixed_partition_kd_step(ModelBundle& student, const ModelBundle& frozen_teacher,
                                   const ModelBundle& frozen_snapshot, const Batch& batch,
                                   const DatasetHandle& data, const TransferConfig& cfg, Adam& opt) {
    const std::size_t b = batch.indices.size();
    Tape t;
    BoundModel bs = bind(t, student, true);
    TaskForward fw_s = forward_task(t, bs, batch, data, cfg);
    BoundModel bt = bind(t, frozen_teacher, false);
    TaskForward fw_t = forward_task(t, bt, batch, data, cfg);
    BoundModel bss = bind(t, frozen_snapshot, false);
    TaskForward fw_ss = forward_task(t, bss, batch, data, cfg);

    // partition between the two frozen guides; ties fall to the snapshot,
    // mirroring the "model 2" side of the K=2 rule
    std::vector<TaskForward> guides;
    guides.push_back(std::move(fw_t));
    guides.push_back(std::move(fw_ss));
    PartitionMask mask = build_masks(guides, batch, cfg, true);

    Tensor kl_teacher = distill_pair(t, fw_s, guides[0], data, cfg);
    Tensor kl_snapshot = distill_pair(t, fw_s, guides[1], data, cfg);
    Tensor dist = add(t, sum(t, mul(t, kl_teacher, Tensor::constant({b}, mask.column(0)))),
                      sum(t, mul(t, kl_snapshot, Tensor::constant({b}, mask.column(1)))));
    dist = scale(t, dist, 1.0 / static_cast<double>(b));
    // no task loss: the strongest configuration of this baseline drops it

    StepResult result;
    result.mask = mask;
    result.task_loss = {0.0, 0.0};
    result.dist_loss = dist.item();
    result.total_loss = dist.item();

    Gradients grads = t.backward(dist);
    opt.step(student, bs, grads);
    return result;
}

// ---- training loops ------------------------------------------------------------------

namespace {

double metric_value(const MetricList& metrics, const std::string& name) {
    for (const auto& [k, v] : metrics) {
        if (k == name) return v;
    }
    throw ContractError("metric " + name + " missing");
}

std::string primary_metric_name(TaskKind task) {
    switch (task) {
        case TaskKind::Classification: return "top1";
        case TaskKind::DenseSeg: return "mIoU";
        case TaskKind::Saliency: return "CC";
    }
    throw ConfigError("unknown task");
}

struct SeriesResult {
    std::vector<double> train_loss;
    std::vector<MetricList> eval_metrics;
};

// task-loss-only loop shared by pretraining and the solo-finetune control
SeriesResult train_task_only(ModelBundle& model, const DatasetHandle& data,
                             const TransferConfig& cfg, const std::vector<unsigned char>* view) {
    Adam opt(model, cfg.learning_rate, cfg.weight_decay);
    SeriesResult out;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        std::size_t batches_seen = 0;
        try {
            for (auto& batch : batches(data, data.train, cfg.batch_size, mix_seed(cfg.seed, epoch))) {
                if (view) batch.x = apply_view(data, batch.x, *view);
                Tape t;
                BoundModel bm = bind(t, model, true);
                TaskForward fw = forward_task(t, bm, batch, data, cfg);
                Tensor total = mean(t, fw.per_sample);
                Gradients grads = t.backward(total);
                opt.step(model, bm, grads);
                loss_sum += total.item();
                ++batches_seen;
            }
            out.eval_metrics.push_back(evaluate_model(model, data, data.eval, view));
        } catch (const NumericError& e) {
            throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ": " +
                                e.what());
        }
        out.train_loss.push_back(loss_sum / static_cast<double>(std::max<std::size_t>(batches_seen, 1)));
    }
    return out;
}

void check_task_heads(const std::vector<ModelBundle*>& models, const DatasetHandle& data,
                      const TransferConfig& cfg) {
    for (const auto* m : models) {
        switch (cfg.task) {
            case TaskKind::Classification:
                if (m->arch.head != HeadKind::ClassLogits || m->arch.output_dim != data.spec.classes) {
                    throw ConfigError("model " + m->name + " does not match the classification task");
                }
                break;
            case TaskKind::DenseSeg:
                if (m->arch.head != HeadKind::DenseLogits ||
                    m->arch.output_dim != data.spec.classes + 1) {
                    throw ConfigError("model " + m->name + " does not match the dense task (needs " +
                                      std::to_string(data.spec.classes + 1) + " output channels)");
                }
                break;
            case TaskKind::Saliency:
                if (m->arch.head != HeadKind::SaliencyMap) {
                    throw ConfigError("model " + m->name + " does not match the saliency task");
                }
                break;
        }
    }
}

CaseStats eval_case_stats(const ModelBundle& a, const ModelBundle& b, const DatasetHandle& data) {
    // orientation per the confidence rule: per sample, the higher gt-confidence
    // model is the teacher; ties fall to model b
    const std::size_t n = data.eval.size();
    const std::size_t dim = data.spec.dim, c = data.spec.classes;
    std::vector<double> xv(data.x.begin() + static_cast<std::ptrdiff_t>(data.eval.begin * dim),
                           data.x.begin() + static_cast<std::ptrdiff_t>(data.eval.end * dim));
    Tensor x = Tensor::constant({n, dim}, std::move(xv));
    std::vector<int> y(data.y.begin() + static_cast<std::ptrdiff_t>(data.eval.begin),
                       data.y.begin() + static_cast<std::ptrdiff_t>(data.eval.end));
    Tensor za = forward_eval(a, x).logits;
    Tensor zb = forward_eval(b, x).logits;
    auto pa = gt_probabilities(za, y);
    auto pb = gt_probabilities(zb, y);
    std::vector<double> zt(n * c), zs(n * c);
    for (std::size_t i = 0; i < n; ++i) {
        const bool a_teaches = pa[i] > pb[i];
        for (std::size_t j = 0; j < c; ++j) {
            zt[i * c + j] = a_teaches ? za.at(i, j) : zb.at(i, j);
            zs[i * c + j] = a_teaches ? zb.at(i, j) : za.at(i, j);
        }
    }
    return classify_cases(Tensor::constant({n, c}, zt), Tensor::constant({n, c}, zs), y);
}

} // namespace

PretrainResult pretrain(ModelBundle& model, const DatasetHandle& data, const TransferConfig& cfg,
                        const std::vector<unsigned char>* view) {
    check_task_heads({&model}, data, cfg);
    if (view) {
        // channels the view hides contribute nothing during pretraining and
        // their input weights receive no gradient; starting them at zero makes
        // the model compute exactly its view-restricted function when full
        // features arrive at transfer time
        auto& w0 = model.params[0];
        const std::size_t width = w0.shape[1];
        for (std::size_t ch = 0; ch < w0.shape[0] && ch < view->size(); ++ch) {
            if (!(*view)[ch]) {
                for (std::size_t j = 0; j < width; ++j) w0.data[ch * width + j] = 0.0;
            }
        }
    }
    auto series = train_task_only(model, data, cfg, view);
    PretrainResult out;
    out.train_loss = series.train_loss;
    const std::string metric = primary_metric_name(cfg.task);
    for (const auto& m : series.eval_metrics) out.eval_metric.push_back(metric_value(m, metric));
    out.final_metric = out.eval_metric.empty() ? 0.0 : out.eval_metric.back();
    return out;
}

TransferReport run_transfer(const std::vector<ModelBundle*>& models, const DatasetHandle& data,
                            const TransferConfig& cfg) {
    cfg.validate(models.size());
    check_task_heads(models, data, cfg);
    if (data.spec.task != cfg.task) throw ConfigError("run_transfer: config task does not match dataset");

    TransferReport report;
    report.method = method_name(cfg.method);
    report.task = task_name(cfg.task);
    report.epochs = cfg.epochs;
    report.batch_size = cfg.batch_size;
    report.learning_rate = cfg.learning_rate;
    report.weight_decay = cfg.weight_decay;
    report.temperature = cfg.weights.temperature;
    report.seed = cfg.seed;
    for (const auto* m : models) report.model_names.push_back(m->name);
    for (const auto* m : models) report.baseline.push_back(evaluate_model(*m, data, data.eval));

    const std::size_t k = models.size();
    const std::size_t n_train = data.train.size();

    if (cfg.epochs > 0 && cfg.method == Method::SoloFinetune) {
        std::vector<SeriesResult> series;
        for (auto* m : models) series.push_back(train_task_only(*m, data, cfg, nullptr));
        for (std::size_t e = 0; e < cfg.epochs; ++e) {
            EpochRecord rec;
            rec.epoch = e + 1;
            rec.teacher_fraction.assign(k, 0.0);
            for (std::size_t m = 0; m < k; ++m) {
                rec.metrics.push_back(series[m].eval_metrics[e]);
                rec.mean_task_loss.push_back(series[m].train_loss[e]);
            }
            report.records.push_back(std::move(rec));
        }
    } else if (cfg.epochs > 0) {
        std::vector<Adam> opts;
        opts.reserve(k);
        for (auto* m : models) opts.emplace_back(*m, cfg.learning_rate, cfg.weight_decay);
        ModelBundle snapshot;
        if (cfg.method == Method::FixedPartitionKd) snapshot = *models[0];

        std::vector<int> first_assign(n_train, -1), last_assign(n_train, -1);
        for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
            EpochRecord rec;
            rec.epoch = epoch;
            rec.mean_task_loss.assign(k, 0.0);
            std::vector<double> teacher_counts(k, 0.0);
            std::size_t batches_seen = 0;
            std::vector<int>& assign = epoch == 1 ? first_assign : last_assign;
            try {
                for (const auto& batch : batches(data, data.train, cfg.batch_size,
                                                 mix_seed(cfg.seed, epoch))) {
                    StepResult step;
                    switch (cfg.method) {
                        case Method::BiKd:
                            step = bi_kd_step(*models[0], *models[1], batch, data, cfg, opts[0], opts[1]);
                            break;
                        case Method::MultiKd:
                            step = multi_kd_step(models, batch, data, cfg, opts);
                            break;
                        case Method::VanillaKd:
                            step = vanilla_kd_step(*models[0], *models[1], batch, data, cfg, opts[0]);
                            break;
                        case Method::FixedPartitionKd:
                            step = fixed_partition_kd_step(*models[0], *models[1], snapshot, batch,
                                                           data, cfg, opts[0]);
                            break;
                        case Method::SoloFinetune:
                            throw ContractError("unreachable");
                    }
                    for (std::size_t m = 0; m < step.task_loss.size() && m < k; ++m) {
                        rec.mean_task_loss[m] += step.task_loss[m];
                    }
                    rec.mean_dist_loss += step.dist_loss;
                    if (step.mask.n > 0) {
                        for (std::size_t i = 0; i < batch.indices.size(); ++i) {
                            const std::size_t teacher = step.mask.teacher_of(i);
                            teacher_counts[teacher] += 1.0;
                            assign[batch.indices[i] - data.train.begin] = static_cast<int>(teacher);
                        }
                    }
                    ++batches_seen;
                }
                for (const auto* m : models) {
                    rec.metrics.push_back(evaluate_model(*m, data, data.eval));
                }
            } catch (const NumericError& e) {
                throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ": " +
                                    e.what());
            }
            const double nb = static_cast<double>(std::max<std::size_t>(batches_seen, 1));
            for (auto& v : rec.mean_task_loss) v /= nb;
            rec.mean_dist_loss /= nb;
            for (double c : teacher_counts) {
                rec.teacher_fraction.push_back(c / static_cast<double>(n_train));
            }
            if (cfg.task == TaskKind::Classification && k == 2 &&
                cfg.method != Method::VanillaKd) {
                rec.cases = eval_case_stats(*models[0], *models[1], data);
            }
            report.records.push_back(std::move(rec));
        }
        if (cfg.epochs >= 2) {
            for (std::size_t i = 0; i < n_train; ++i) {
                if (first_assign[i] >= 0 && last_assign[i] >= 0 && first_assign[i] != last_assign[i]) {
                    ++report.teacher_flips;
                }
            }
        }
    }

    for (std::size_t m = 0; m < k; ++m) {
        report.final_metrics.push_back(evaluate_model(*models[m], data, data.eval));
        MetricList d;
        for (const auto& [name, v] : report.final_metrics[m]) {
            d.emplace_back(name, v - metric_value(report.baseline[m], name));
        }
        report.delta.push_back(std::move(d));
    }
    return report;
}

// ---- report serialization ---------------------------------------------------------

namespace {

nlohmann::ordered_json metrics_json(const MetricList& m) {
    nlohmann::ordered_json o = nlohmann::ordered_json::object();
    for (const auto& [name, v] : m) o[name] = v;
    return o;
}

nlohmann::ordered_json cases_json(const CaseStats& c) {
    nlohmann::ordered_json o = nlohmann::ordered_json::object();
    o["total"] = c.total;
    o["case1"] = c.case1;
    o["case2"] = c.case2;
    o["case3"] = c.case3;
    o["frac1"] = c.frac1;
    o["frac2"] = c.frac2;
    o["frac3"] = c.frac3;
    return o;
}

} // namespace

std::string serialize_report(const TransferReport& r) {
    nlohmann::ordered_json j;
    j["schema_version"] = r.schema_version;
    j["method"] = r.method;
    j["task"] = r.task;
    j["epochs"] = r.epochs;
    j["batch_size"] = r.batch_size;
    j["learning_rate"] = r.learning_rate;
    j["weight_decay"] = r.weight_decay;
    j["temperature"] = r.temperature;
    j["seed"] = r.seed;
    j["models"] = r.model_names;
    j["baseline"] = nlohmann::ordered_json::array();
    for (const auto& m : r.baseline) j["baseline"].push_back(metrics_json(m));
    j["epochs_log"] = nlohmann::ordered_json::array();
    for (const auto& rec : r.records) {
        nlohmann::ordered_json e;
        e["epoch"] = rec.epoch;
        e["metrics"] = nlohmann::ordered_json::array();
        for (const auto& m : rec.metrics) e["metrics"].push_back(metrics_json(m));
        e["mean_task_loss"] = rec.mean_task_loss;
        e["mean_dist_loss"] = rec.mean_dist_loss;
        e["teacher_fraction"] = rec.teacher_fraction;
        if (rec.cases.total > 0) e["cases"] = cases_json(rec.cases);
        j["epochs_log"].push_back(std::move(e));
    }
    j["final"] = nlohmann::ordered_json::array();
    for (const auto& m : r.final_metrics) j["final"].push_back(metrics_json(m));
    j["delta"] = nlohmann::ordered_json::array();
    for (const auto& m : r.delta) j["delta"].push_back(metrics_json(m));
    j["teacher_flips"] = r.teacher_flips;
    return j.dump(2);
}

void write_report(const TransferReport& report, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("report: cannot open " + path + " for writing");
    os << "bikd-report v1\n" << serialize_report(report) << "\n";
    if (!os) throw IoError("report: write failed for " + path);
}

} // namespace bikd
