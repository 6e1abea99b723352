#include "bikd/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "bikd/container_io.hpp"
#include "bikd/errors.hpp"
#include "bikd/rng.hpp"

namespace bikd {

std::string head_kind_name(HeadKind k) {
    switch (k) {
        case HeadKind::ClassLogits: return "class-logits";
        case HeadKind::DenseLogits: return "dense-logits";
        case HeadKind::SaliencyMap: return "saliency-map";
    }
    throw ConfigError("unknown head kind");
}

HeadKind head_kind_from(const std::string& name) {
    if (name == "class-logits") return HeadKind::ClassLogits;
    if (name == "dense-logits") return HeadKind::DenseLogits;
    if (name == "saliency-map") return HeadKind::SaliencyMap;
    throw ConfigError("unknown head kind: " + name);
}

void ArchDescriptor::validate() const {
    if (input_dim == 0) throw ConfigError("arch: input_dim must be positive");
    if (output_dim == 0) throw ConfigError("arch: output_dim must be positive");
    for (std::size_t w : hidden) {
        if (w == 0) throw ConfigError("arch: hidden widths must be positive");
    }
    if (head == HeadKind::SaliencyMap && output_dim != 1) {
        throw ConfigError("arch: saliency head requires output_dim == 1");
    }
}

std::size_t ArchDescriptor::parameter_count() const {
    std::size_t n = 0, prev = input_dim;
    for (std::size_t w : hidden) {
        n += prev * w + w;
        prev = w;
    }
    n += prev * output_dim + output_dim;
    return n;
}

std::size_t ArchDescriptor::feature_dim() const {
    return hidden.empty() ? input_dim : hidden.back();
}

std::size_t ModelBundle::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.data.size();
    return n;
}

const NamedParam& ModelBundle::param(const std::string& pname) const {
    for (const auto& p : params) {
        if (p.name == pname) return p;
    }
    throw ContractError("model " + name + ": no parameter named " + pname);
}

ModelBundle init_model(const std::string& name, const ArchDescriptor& arch, std::uint64_t seed) {
    arch.validate();
    ModelBundle m;
    m.name = name;
    m.arch = arch;
    Rng rng(mix_seed(seed, 0xB1CDULL));

    std::vector<std::size_t> widths;
    widths.push_back(arch.input_dim);
    for (std::size_t w : arch.hidden) widths.push_back(w);
    widths.push_back(arch.output_dim);

    for (std::size_t layer = 0; layer + 1 < widths.size(); ++layer) {
        const std::size_t fan_in = widths[layer], fan_out = widths[layer + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        NamedParam w;
        w.name = "w" + std::to_string(layer);
        w.shape = {fan_in, fan_out};
        w.data.resize(fan_in * fan_out);
        for (auto& v : w.data) v = rng.uniform(-bound, bound);
        m.params.push_back(std::move(w));

        NamedParam b;
        b.name = "b" + std::to_string(layer);
        b.shape = {fan_out};
        b.data.assign(fan_out, 0.0);
        m.params.push_back(std::move(b));
    }
    m.feature_tap = arch.hidden.empty() ? "input" : "h" + std::to_string(arch.hidden.size() - 1);
    return m;
}

BoundModel bind(Tape& t, const ModelBundle& m, bool requires_grad) {
    BoundModel bm;
    bm.model = &m;
    bm.params.reserve(m.params.size());
    for (const auto& p : m.params) bm.params.push_back(t.leaf(p.shape, p.data, requires_grad));
    return bm;
}

namespace {

// stack of matmul+bias+relu layers; returns (logits, pre-head features)
ForwardResult run_mlp(Tape& t, const BoundModel& bm, const Tensor& x) {
    const auto& arch = bm.model->arch;
    Tensor h = x;
    Tensor features = x;
    for (std::size_t layer = 0; layer < arch.hidden.size(); ++layer) {
        h = relu(t, add_rows(t, matmul(t, h, bm.params[2 * layer]), bm.params[2 * layer + 1]));
        features = h;
    }
    const std::size_t out_layer = arch.hidden.size();
    Tensor logits = add_rows(t, matmul(t, h, bm.params[2 * out_layer]), bm.params[2 * out_layer + 1]);
    return {logits, features};
}

} // namespace

ForwardResult forward_classifier(Tape& t, const BoundModel& bm, const Tensor& x) {
    const auto& arch = bm.model->arch;
    if (arch.head != HeadKind::ClassLogits) {
        throw ConfigError("forward_classifier: model " + bm.model->name + " has head " +
                          head_kind_name(arch.head));
    }
    if (x.shape.size() != 2 || x.shape[1] != arch.input_dim) {
        throw DimensionError("forward_classifier: input " + shape_str(x.shape) +
                             " does not match input_dim " + std::to_string(arch.input_dim));
    }
    return run_mlp(t, bm, x);
}

ForwardResult forward_dense(Tape& t, const BoundModel& bm, const Tensor& x) {
    const auto& arch = bm.model->arch;
    if (arch.head == HeadKind::ClassLogits) {
        throw ConfigError("forward_dense: model " + bm.model->name + " has a classification head");
    }
    if (x.shape.size() != 4 || x.shape[3] != arch.input_dim) {
        throw DimensionError("forward_dense: input " + shape_str(x.shape) +
                             " does not match [N,H,W," + std::to_string(arch.input_dim) + "]");
    }
    const std::size_t n = x.shape[0], h = x.shape[1], w = x.shape[2];
    Tensor flat = reshape(t, x, {n * h * w, arch.input_dim});
    ForwardResult per_pixel = run_mlp(t, bm, flat);
    if (arch.head == HeadKind::SaliencyMap) {
        Tensor maps = sigmoid(t, reshape(t, per_pixel.logits, {n, h, w}));
        return {maps, per_pixel.features};
    }
    Tensor logits = reshape(t, per_pixel.logits, {n, h, w, arch.output_dim});
    return {logits, per_pixel.features};
}

ForwardResult forward_eval(const ModelBundle& m, const Tensor& x) {
    Tape t;
    BoundModel bm = bind(t, m, false);
    if (m.arch.head == HeadKind::ClassLogits) return forward_classifier(t, bm, x);
    return forward_dense(t, bm, x);
}

// ---- checkpoint container ----------------------------------------------------

namespace {

constexpr const char* kCkptMagic = "BIKD-CKPT v1";

std::string join_sizes(const std::vector<std::size_t>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) os << ",";
        os << v[i];
    }
    return os.str();
}

std::vector<std::size_t> split_sizes(const std::string& s) {
    std::vector<std::size_t> out;
    if (s.empty()) return out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoull(item));
    return out;
}

} // namespace

void save_checkpoint(const ModelBundle& m, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("checkpoint: cannot open " + path + " for writing");
    os << kCkptMagic << "\n";
    os << "kind=model\n";
    os << "name=" << m.name << "\n";
    os << "arch.input_dim=" << m.arch.input_dim << "\n";
    os << "arch.hidden=" << join_sizes(m.arch.hidden) << "\n";
    os << "arch.output_dim=" << m.arch.output_dim << "\n";
    os << "arch.head=" << head_kind_name(m.arch.head) << "\n";
    os << "feature_tap=" << m.feature_tap << "\n";
    os << "params=" << m.params.size() << "\n";
    os << "END-HEADER\n";
    for (const auto& p : m.params) io::put_record(os, p.name, p.data);
    if (!os) throw IoError("checkpoint: write failed for " + path);
}

ModelBundle load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open " + path);
    std::string line;
    if (!std::getline(is, line) || line != kCkptMagic) {
        throw DataError("checkpoint: bad format line in " + path);
    }
    ModelBundle m;
    std::size_t declared_params = 0;
    while (std::getline(is, line)) {
        if (line == "END-HEADER") break;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw DataError("checkpoint: malformed header line: " + line);
        std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        if (key == "kind") {
            if (value != "model") throw DataError("checkpoint: not a model container: " + value);
        } else if (key == "name") {
            m.name = value;
        } else if (key == "arch.input_dim") {
            m.arch.input_dim = std::stoull(value);
        } else if (key == "arch.hidden") {
            m.arch.hidden = split_sizes(value);
        } else if (key == "arch.output_dim") {
            m.arch.output_dim = std::stoull(value);
        } else if (key == "arch.head") {
            m.arch.head = head_kind_from(value);
        } else if (key == "feature_tap") {
            m.feature_tap = value;
        } else if (key == "params") {
            declared_params = std::stoull(value);
        } else {
            throw DataError("checkpoint: unknown header key: " + key);
        }
    }
    m.arch.validate();

    // shapes are reconstructed from the arch; the container stores counts only
    std::vector<std::size_t> widths;
    widths.push_back(m.arch.input_dim);
    for (std::size_t w : m.arch.hidden) widths.push_back(w);
    widths.push_back(m.arch.output_dim);

    for (std::size_t i = 0; i < declared_params; ++i) {
        auto [pname, values] = io::get_record(is);
        const std::size_t count = values.size();
        NamedParam p;
        p.name = pname;
        const std::size_t layer = std::stoull(pname.substr(1));
        if (layer + 1 >= widths.size()) throw DataError("checkpoint: parameter " + pname + " outside arch");
        if (pname[0] == 'w') {
            p.shape = {widths[layer], widths[layer + 1]};
        } else if (pname[0] == 'b') {
            p.shape = {widths[layer + 1]};
        } else {
            throw DataError("checkpoint: unrecognized parameter name " + pname);
        }
        if (shape_numel(p.shape) != count) {
            throw DataError("checkpoint: parameter " + pname + " count " + std::to_string(count) +
                            " does not match arch");
        }
        p.data = std::move(values);
        m.params.push_back(std::move(p));
    }
    if (m.parameter_count() != m.arch.parameter_count()) {
        throw DataError("checkpoint: parameter count does not match arch in " + path);
    }
    return m;
}

} // namespace bikd
