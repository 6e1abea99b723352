#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bikd/tape.hpp"
#include "bikd/tensor.hpp"

namespace bikd {

enum class HeadKind { ClassLogits, DenseLogits, SaliencyMap };

std::string head_kind_name(HeadKind k);
HeadKind head_kind_from(const std::string& name);

// MLP shape: input_dim -> hidden... -> output_dim, relu activations between.
// Dense heads apply the same stack per pixel (weights shared across pixels).
struct ArchDescriptor {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden;
    std::size_t output_dim = 0;
    HeadKind head = HeadKind::ClassLogits;

    void validate() const;
    std::size_t parameter_count() const;
    std::size_t feature_dim() const; // width of the layer feeding the head
};

struct NamedParam {
    std::string name;
    Shape shape;
    std::vector<double> data;
};

// One participating model: a named, ordered parameter set plus its
// architecture. Parameters are plain arrays; each training step binds them
// onto a fresh tape.
struct ModelBundle {
    std::string name;
    ArchDescriptor arch;
    std::vector<NamedParam> params;
    std::string feature_tap; // layer whose activations feed the representation analysis

    std::size_t parameter_count() const;
    const NamedParam& param(const std::string& pname) const;
};

// Deterministic init: weights uniform in +-sqrt(6/(fan_in+fan_out)), biases 0.
ModelBundle init_model(const std::string& name, const ArchDescriptor& arch, std::uint64_t seed);

// Parameters registered as leaves on a tape, same order as the bundle.
struct BoundModel {
    const ModelBundle* model = nullptr;
    std::vector<Tensor> params;
};

BoundModel bind(Tape& t, const ModelBundle& m, bool requires_grad = true);

struct ForwardResult {
    Tensor logits;   // classifier: [N x C]; dense: [N,H,W,C]; saliency: [N,H,W]
    Tensor features; // tap activations, one row per sample (or per pixel for dense)
};

// x: [N x input_dim]; head must be ClassLogits.
ForwardResult forward_classifier(Tape& t, const BoundModel& bm, const Tensor& x);

// x: [N, H, W, input_dim]; applies the MLP per pixel. DenseLogits yields
// [N,H,W,output_dim]; SaliencyMap yields sigmoid outputs [N,H,W].
ForwardResult forward_dense(Tape& t, const BoundModel& bm, const Tensor& x);

// Convenience for evaluation: forward on a private tape without gradients.
ForwardResult forward_eval(const ModelBundle& m, const Tensor& x);

// Binary checkpoint container: text header (format line, key=value arch
// fields, END-HEADER), then per parameter: u32 name length, name bytes,
// u64 element count, little-endian IEEE-754 doubles. Round-trips bit-exactly.
void save_checkpoint(const ModelBundle& m, const std::string& path);
ModelBundle load_checkpoint(const std::string& path);

} // namespace bikd
