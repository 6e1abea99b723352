#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bikd/data.hpp"
#include "bikd/losses.hpp"
#include "bikd/model.hpp"
#include "bikd/partition.hpp"

namespace bikd {

enum class Method { BiKd, MultiKd, VanillaKd, FixedPartitionKd, SoloFinetune };

std::string method_name(Method m);
Method method_from(const std::string& name);

struct TransferConfig {
    Method method = Method::BiKd;
    TaskKind task = TaskKind::Classification;
    double learning_rate = 1e-4; // transfer-phase default; pretraining runs use 1e-3
    double weight_decay = 1e-5;
    std::size_t epochs = 20;
    std::size_t batch_size = 128;
    std::uint64_t seed = 0;
    PartitionRule partition_rule = PartitionRule::Confidence;
    KlDirection kl_direction = KlDirection::Forward;
    LossWeights weights;

    void validate(std::size_t model_count) const;
};

// AdamW-style optimizer state for one model: decoupled weight decay, one
// moment pair per parameter tensor.
class Adam {
public:
    Adam(const ModelBundle& model, double learning_rate, double weight_decay);

    // applies one update from the gradients of the bound leaves
    void step(ModelBundle& model, const BoundModel& bound, const Gradients& grads);

    std::size_t step_count() const { return t_; }

private:
    double lr_;
    double wd_;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

using MetricList = std::vector<std::pair<std::string, double>>;

struct StepResult {
    std::vector<double> task_loss; // batch mean per model
    double dist_loss = 0.0;
    double total_loss = 0.0;
    PartitionMask mask; // empty (n == 0) for methods without a partition
};

struct EpochRecord {
    std::size_t epoch = 0; // 1-based
    std::vector<MetricList> metrics;      // per model, eval split
    std::vector<double> mean_task_loss;   // per model, train
    double mean_dist_loss = 0.0;
    std::vector<double> teacher_fraction; // per model
    CaseStats cases;                      // classification, K == 2 only
};

struct TransferReport {
    int schema_version = 1;
    std::string method;
    std::string task;
    std::size_t epochs = 0;
    std::size_t batch_size = 0;
    double learning_rate = 0.0;
    double weight_decay = 0.0;
    double temperature = 1.0;
    std::uint64_t seed = 0;
    std::vector<std::string> model_names;
    std::vector<MetricList> baseline; // per model, before any step
    std::vector<EpochRecord> records; // one per epoch
    std::vector<MetricList> final_metrics;
    std::vector<MetricList> delta; // final - baseline per metric
    std::size_t teacher_flips = 0; // train samples whose teacher changed, first vs last epoch
};

struct PretrainResult {
    std::vector<double> train_loss;  // per epoch
    std::vector<double> eval_metric; // per epoch, primary task metric
    double final_metric = 0.0;
};

// Task-loss-only training. The optional view hides feature channels for the
// complementary-pretraining phase; evaluation inside uses the same view.
PretrainResult pretrain(ModelBundle& model, const DatasetHandle& data, const TransferConfig& cfg,
                        const std::vector<unsigned char>* view = nullptr);

// One optimization step per method. Masks and losses follow the dynamic
// teacher-assignment scheme; each sample's teacher branch is severed by
// stop_gradient inside the distillation term.
StepResult bi_kd_step(ModelBundle& m1, ModelBundle& m2, const Batch& batch,
                      const DatasetHandle& data, const TransferConfig& cfg, Adam& opt1, Adam& opt2);

StepResult multi_kd_step(const std::vector<ModelBundle*>& models, const Batch& batch,
                         const DatasetHandle& data, const TransferConfig& cfg,
                         std::vector<Adam>& opts);

StepResult vanilla_kd_step(ModelBundle& student, const ModelBundle& frozen_teacher,
                           const Batch& batch, const DatasetHandle& data, const TransferConfig& cfg,
                           Adam& opt);

StepResult fixed_partition_kd_step(ModelBundle& student, const ModelBundle& frozen_teacher,
                                   const ModelBundle& frozen_snapshot, const Batch& batch,
                                   const DatasetHandle& data, const TransferConfig& cfg, Adam& opt);

// The full loop: per-epoch shuffling from the run seed, the selected step
// function, per-epoch evaluation on the eval split. Models are updated in
// place; vanilla/fixed-partition leave models[1] untouched.
TransferReport run_transfer(const std::vector<ModelBundle*>& models, const DatasetHandle& data,
                            const TransferConfig& cfg);

// JSON body of a report (stable key order); callers prepend the schema line.
std::string serialize_report(const TransferReport& report);
void write_report(const TransferReport& report, const std::string& path);

} // namespace bikd
