#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "bikd/data.hpp"
#include "bikd/model.hpp"
#include "bikd/tensor.hpp"

namespace bikd {

// plain (non-differentiable) Pearson correlation
double pearson(const std::vector<double>& p, const std::vector<double>& q);

// fraction of argmax hits
double classification_top1(const Tensor& logits, const std::vector<int>& labels);

struct SegMetrics {
    double miou = 0.0;
    double fwiou = 0.0;
    double macc = 0.0;
    double pacc = 0.0;
};

// Confusion-matrix metrics; classes absent from gt are excluded from the
// mIoU/mACC means.
SegMetrics segmentation_metrics(const std::vector<int>& pred, const std::vector<int>& gt,
                                std::size_t classes);

struct SaliencyMetrics {
    double cc = 0.0;
    double nss = 0.0;
};

// CC is Pearson between maps; NSS is the mean standardized prediction value at
// the fixation pixels (population standard deviation).
SaliencyMetrics saliency_metrics(const std::vector<double>& pred, const std::vector<double>& gt_map,
                                 const std::vector<std::pair<int, int>>& fixations, std::size_t grid);

struct CcaSummary {
    std::vector<double> correlations; // descending, clipped to [0,1]
    std::size_t k = 0;
    double mean_top_k = 0.0;
};

// Canonical correlations between two feature matrices [n x fa], [n x fb]:
// covariance whitening with ridge gamma, SVD of the whitened cross-covariance,
// correlations measured on the canonical variates. Requires n > max(fa, fb)
// and k <= min(fa, fb).
CcaSummary cca(const Tensor& features_a, const Tensor& features_b, std::size_t k,
               double ridge = 1e-6);

// (after - before) / (ensemble - before); may exceed 1
double recovered(double before, double after, double ensemble);

// Classification: mean softmax over models, argmax accuracy. Dense: metrics of
// the averaged per-pixel predictions (returns mIoU). Saliency: mean CC of the
// averaged maps.
double ensemble_eval(const std::vector<const ModelBundle*>& models, const DatasetHandle& data,
                     const Split& split);

// Dense-seg output convention: per-pixel channels [0, classes) are class
// logits, channel [classes] is the region-mask logit. Prediction: background
// unless the mask fires, then the image-level argmax class.
std::vector<int> dense_predictions(const ModelBundle& model, const DatasetHandle& data,
                                   const Split& split);

// eval-split metric bundle used by the trainer's per-epoch records; the
// optional view hides feature channels (pretraining-phase evaluation)
std::vector<std::pair<std::string, double>> evaluate_model(
    const ModelBundle& model, const DatasetHandle& data, const Split& split,
    const std::vector<unsigned char>* view = nullptr);

// tap features over a split, one row per sample, [n x feature_dim]
Tensor tap_features(const ModelBundle& model, const DatasetHandle& data, const Split& split);

} // namespace bikd
