#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bikd/tensor.hpp"

namespace bikd {

enum class TaskKind { Classification, DenseSeg, Saliency };

std::string task_name(TaskKind t);
TaskKind task_from(const std::string& name);

// Everything a generator needs; regeneration from an identical spec is
// bit-identical.
struct DatasetSpec {
    TaskKind task = TaskKind::Classification;
    std::uint64_t seed = 1;
    std::size_t train_size = 8000;
    std::size_t eval_size = 2000;

    // classification
    std::size_t dim = 16;      // feature count, split into two signal halves
    std::size_t classes = 4;
    double signal_a = 1.6;     // class-mean radius carried by the first half
    double signal_b = 1.6;     // ... and by the second half
    double noise = 1.0;
    // fraction of train-split labels flipped to a uniformly random other
    // class; eval labels stay clean. Gives teacher distributions knowledge the
    // labels alone do not carry.
    double label_noise = 0.0;

    // dense segmentation / saliency
    std::size_t grid = 8;      // H == W
    std::size_t channels = 6;  // per-pixel feature channels
    double dense_noise = 0.6;
    double area_lo = 0.25;     // region area fraction range
    double area_hi = 0.55;
    std::size_t fixations = 30;

    void validate() const;
};

// Per-model feature visibility used during pretraining only; the transfer
// phase always sees full features. Union of views must cover every channel.
struct ViewPolicy {
    std::vector<std::vector<unsigned char>> visible; // [model][channel]

    static ViewPolicy full(std::size_t models, std::size_t channels);
    // model 0 sees channels [0, d/2), model 1 the complement
    static ViewPolicy halves(std::size_t channels);
    // three windows, each covering 2/3 of the channels, pairwise overlapping
    static ViewPolicy overlapping_thirds(std::size_t channels);

    void validate(std::size_t channels) const;
};

struct Split {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
};

struct DatasetHandle {
    DatasetSpec spec;
    Split train;
    Split eval;

    // classification: features [n x dim], labels [n]
    std::vector<double> x;
    std::vector<int> y;

    // dense: features [n x grid x grid x channels], per-pixel labels, the
    // region class per image, and the binary region mask
    std::vector<double> dense_x;
    std::vector<int> pixel_labels;  // n x grid x grid
    std::vector<int> region_class;  // n, in [1, classes)
    std::vector<double> region_mask; // n x grid x grid, binary

    // saliency: features as dense_x layout, maps sum to 1 per sample,
    // fixation points sampled from each map
    std::vector<double> maps; // n x grid x grid
    std::vector<std::vector<std::pair<int, int>>> fixation_points;

    std::size_t total() const { return train.size() + eval.size(); }
    std::size_t sample_dim() const;    // flat feature width of one sample
    std::size_t dense_classes() const; // label classes incl. background
};

DatasetHandle gen_classification(const DatasetSpec& spec);
DatasetHandle gen_dense(const DatasetSpec& spec);
DatasetHandle gen_saliency(const DatasetSpec& spec);
DatasetHandle generate(const DatasetSpec& spec); // dispatch on spec.task

struct Batch {
    std::vector<std::size_t> indices; // dataset indices, in batch order
    Tensor x;                         // classification [B x D]; dense [B,H,W,C]
    std::vector<int> labels;          // classification labels / dense region classes
};

// Full shuffled permutation of the split, chunked; the final short batch is
// included. Identical epoch_seed gives an identical order.
std::vector<Batch> batches(const DatasetHandle& data, const Split& split, std::size_t batch_size,
                           std::uint64_t epoch_seed);

// Zeroes the channels a model's view hides; x layout must match the task.
Tensor apply_view(const DatasetHandle& data, const Tensor& x, const std::vector<unsigned char>& mask);

// Dataset cache in the shared container format; regeneration is the source of
// truth, the cache exists for manifests and inspection.
void save_dataset_cache(const DatasetHandle& data, const std::string& path);
// Reads the spec header and regenerates (bit-identical by construction).
DatasetHandle load_dataset_cache(const std::string& path);

} // namespace bikd
