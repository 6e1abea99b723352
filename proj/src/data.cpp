#include "bikd/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "bikd/container_io.hpp"
#include "bikd/errors.hpp"
#include "bikd/rng.hpp"

namespace bikd {

std::string task_name(TaskKind t) {
    switch (t) {
        case TaskKind::Classification: return "classification";
        case TaskKind::DenseSeg: return "dense-seg";
        case TaskKind::Saliency: return "saliency";
    }
    throw ConfigError("unknown task");
}

TaskKind task_from(const std::string& name) {
    if (name == "classification") return TaskKind::Classification;
    if (name == "dense-seg") return TaskKind::DenseSeg;
    if (name == "saliency") return TaskKind::Saliency;
    throw ConfigError("unknown task: " + name);
}

void DatasetSpec::validate() const {
    if (train_size == 0 || eval_size == 0) throw ConfigError("dataset: empty split");
    switch (task) {
        case TaskKind::Classification:
            if (classes < 2) throw ConfigError("dataset: need at least 2 classes");
            if (dim < 4) throw ConfigError("dataset: need at least 4 feature dims");
            if (!(noise > 0.0)) throw ConfigError("dataset: noise must be positive");
            if (!(signal_a > 0.0) || !(signal_b > 0.0)) {
                throw ConfigError("dataset: per-half margin impossible with nonpositive signal");
            }
            if (label_noise < 0.0 || label_noise >= 1.0) {
                throw ConfigError("dataset: label_noise must lie in [0, 1)");
            }
            break;
        case TaskKind::DenseSeg:
            if (grid < 4) throw ConfigError("dataset: dense grid must be at least 4x4");
            if (classes < 2) throw ConfigError("dataset: need at least 2 classes");
            if (channels < 6 || channels % 2 != 0) {
                throw ConfigError("dataset: dense features need an even channel count >= 6");
            }
            if (!(area_lo > 0.0) || !(area_hi < 1.0) || area_lo >= area_hi) {
                throw ConfigError("dataset: region area fractions must satisfy 0 < lo < hi < 1");
            }
            break;
        case TaskKind::Saliency:
            if (grid < 8) throw ConfigError("dataset: saliency grid must be at least 8x8");
            if (channels < 4 || channels % 2 != 0) {
                throw ConfigError("dataset: saliency features need an even channel count >= 4");
            }
            if (fixations == 0) throw ConfigError("dataset: need at least one fixation per sample");
            break;
    }
}

ViewPolicy ViewPolicy::full(std::size_t models, std::size_t channels) {
    ViewPolicy v;
    v.visible.assign(models, std::vector<unsigned char>(channels, 1));
    return v;
}

ViewPolicy ViewPolicy::halves(std::size_t channels) {
    ViewPolicy v;
    v.visible.assign(2, std::vector<unsigned char>(channels, 0));
    const std::size_t half = channels / 2;
    for (std::size_t c = 0; c < channels; ++c) {
        if (c < half) v.visible[0][c] = 1;
        else v.visible[1][c] = 1;
    }
    v.validate(channels);
    return v;
}

ViewPolicy ViewPolicy::overlapping_thirds(std::size_t channels) {
    if (channels < 3) throw ConfigError("view policy: need at least 3 channels for thirds");
    ViewPolicy v;
    v.visible.assign(3, std::vector<unsigned char>(channels, 0));
    const std::size_t third = channels / 3;
    // each window spans two adjacent thirds; the last wraps around
    for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t t = std::min<std::size_t>(c / std::max<std::size_t>(third, 1), 2);
        v.visible[t][c] = 1;
        v.visible[(t + 1) % 3][c] = 1;
    }
    v.validate(channels);
    return v;
}

void ViewPolicy::validate(std::size_t channels) const {
    if (visible.empty()) throw ConfigError("view policy: no models");
    for (const auto& m : visible) {
        if (m.size() != channels) throw ConfigError("view policy: channel count mismatch");
    }
    for (std::size_t c = 0; c < channels; ++c) {
        bool covered = false;
        for (const auto& m : visible) covered = covered || m[c];
        if (!covered) throw ConfigError("view policy: channel " + std::to_string(c) + " hidden from every model");
    }
}

std::size_t DatasetHandle::sample_dim() const {
    if (spec.task == TaskKind::Classification) return spec.dim;
    return spec.grid * spec.grid * spec.channels;
}

std::size_t DatasetHandle::dense_classes() const {
    return spec.classes;
}

// ---- classification -----------------------------------------------------------

DatasetHandle gen_classification(const DatasetSpec& spec) {
    spec.validate();
    if (spec.task != TaskKind::Classification) throw ConfigError("gen_classification: wrong task");
    DatasetHandle d;
    d.spec = spec;
    const std::size_t n = spec.train_size + spec.eval_size;
    d.train = {0, spec.train_size};
    d.eval = {spec.train_size, n};

    Rng rng(mix_seed(spec.seed, 0xC1A55ULL));
    const std::size_t half = spec.dim / 2;

    // per-class unit directions in each half, scaled by the half's signal
    auto draw_direction = [&](std::size_t width) {
        std::vector<double> u(width);
        double norm = 0.0;
        for (auto& v : u) {
            v = rng.normal();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (auto& v : u) v /= norm;
        return u;
    };
    std::vector<std::vector<double>> means(spec.classes, std::vector<double>(spec.dim, 0.0));
    for (std::size_t c = 0; c < spec.classes; ++c) {
        auto ua = draw_direction(half);
        auto ub = draw_direction(spec.dim - half);
        for (std::size_t j = 0; j < half; ++j) means[c][j] = spec.signal_a * ua[j];
        for (std::size_t j = half; j < spec.dim; ++j) means[c][j] = spec.signal_b * ub[j - half];
    }
    // degenerate class directions make the requested margins impossible
    for (std::size_t a = 0; a < spec.classes; ++a) {
        for (std::size_t b = a + 1; b < spec.classes; ++b) {
            double da = 0.0, db = 0.0;
            for (std::size_t j = 0; j < half; ++j) da += (means[a][j] - means[b][j]) * (means[a][j] - means[b][j]);
            for (std::size_t j = half; j < spec.dim; ++j) db += (means[a][j] - means[b][j]) * (means[a][j] - means[b][j]);
            if (da < 1e-12 || db < 1e-12) {
                throw ConfigError("gen_classification: coincident class means; margin impossible");
            }
        }
    }

    // balanced labels, then a deterministic shuffle
    d.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) d.y[i] = static_cast<int>(i % spec.classes);
    rng.shuffle(d.y);

    d.x.resize(n * spec.dim);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& mu = means[static_cast<std::size_t>(d.y[i])];
        for (std::size_t j = 0; j < spec.dim; ++j) {
            d.x[i * spec.dim + j] = mu[j] + spec.noise * rng.normal();
        }
    }
    if (spec.label_noise > 0.0) {
        // train labels only; features keep their generating cluster
        Rng flip(mix_seed(spec.seed, 0xF11B5ULL));
        for (std::size_t i = d.train.begin; i < d.train.end; ++i) {
            if (flip.uniform() < spec.label_noise) {
                const auto offset = 1 + static_cast<int>(flip.below(spec.classes - 1));
                d.y[i] = (d.y[i] + offset) % static_cast<int>(spec.classes);
            }
        }
    }
    return d;
}

// ---- dense segmentation ---------------------------------------------------------

namespace {

// region geometry: axis-aligned rectangle or disc covering roughly the
// requested area fraction
void paint_region(Rng& rng, std::size_t grid, double area_lo, double area_hi,
                  std::vector<unsigned char>& inside) {
    inside.assign(grid * grid, 0);
    const double frac = rng.uniform(area_lo, area_hi);
    const bool disc = rng.next_u64() & 1;
    if (disc) {
        const double radius = std::sqrt(frac * static_cast<double>(grid * grid) / std::numbers::pi);
        const double cx = rng.uniform(radius * 0.8, grid - radius * 0.8);
        const double cy = rng.uniform(radius * 0.8, grid - radius * 0.8);
        for (std::size_t r = 0; r < grid; ++r)
            for (std::size_t c = 0; c < grid; ++c) {
                const double dx = (static_cast<double>(c) + 0.5) - cx;
                const double dy = (static_cast<double>(r) + 0.5) - cy;
                if (dx * dx + dy * dy <= radius * radius) inside[r * grid + c] = 1;
            }
    } else {
        const double aspect = rng.uniform(0.6, 1.6);
        double w = std::sqrt(frac * static_cast<double>(grid * grid) * aspect);
        double h = w / aspect;
        w = std::min(w, static_cast<double>(grid));
        h = std::min(h, static_cast<double>(grid));
        const double x0 = rng.uniform(0.0, grid - w);
        const double y0 = rng.uniform(0.0, grid - h);
        for (std::size_t r = 0; r < grid; ++r)
            for (std::size_t c = 0; c < grid; ++c) {
                const double px = static_cast<double>(c) + 0.5, py = static_cast<double>(r) + 0.5;
                if (px >= x0 && px <= x0 + w && py >= y0 && py <= y0 + h) inside[r * grid + c] = 1;
            }
    }
}

} // namespace

DatasetHandle gen_dense(const DatasetSpec& spec) {
    spec.validate();
    if (spec.task != TaskKind::DenseSeg) throw ConfigError("gen_dense: wrong task");
    DatasetHandle d;
    d.spec = spec;
    const std::size_t n = spec.train_size + spec.eval_size;
    d.train = {0, spec.train_size};
    d.eval = {spec.train_size, n};

    Rng rng(mix_seed(spec.seed, 0xDE45E6ULL));
    const std::size_t g = spec.grid, px = g * g, ch = spec.channels;
    const std::size_t fg_classes = spec.classes - 1; // label 0 is background

    d.dense_x.resize(n * px * ch);
    d.pixel_labels.resize(n * px);
    d.region_class.resize(n);
    d.region_mask.resize(n * px);

    // balanced region classes
    std::vector<int> cls(n);
    for (std::size_t i = 0; i < n; ++i) cls[i] = 1 + static_cast<int>(i % std::max<std::size_t>(fg_classes, 1));
    rng.shuffle(cls);

    std::vector<unsigned char> inside;
    for (std::size_t i = 0; i < n; ++i) {
        const int c = fg_classes == 0 ? 1 : cls[i];
        d.region_class[i] = c;
        paint_region(rng, g, spec.area_lo, spec.area_hi, inside);
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) /
                             static_cast<double>(spec.classes);
        for (std::size_t p = 0; p < px; ++p) {
            const bool fg = inside[p] != 0;
            d.pixel_labels[i * px + p] = fg ? c : 0;
            d.region_mask[i * px + p] = fg ? 1.0 : 0.0;
            double* feat = &d.dense_x[(i * px + p) * ch];
            const double ind = fg ? 1.0 : 0.0;
            // two independent noisy encodings, one per half
            const std::size_t half = ch / 2;
            feat[0] = ind + spec.dense_noise * rng.normal();
            feat[1] = ind * std::cos(angle) + spec.dense_noise * rng.normal();
            feat[2] = ind * std::sin(angle) + spec.dense_noise * rng.normal();
            for (std::size_t k = 3; k < half; ++k) feat[k] = spec.dense_noise * rng.normal();
            feat[half + 0] = ind + spec.dense_noise * rng.normal();
            feat[half + 1] = ind * std::cos(angle) + spec.dense_noise * rng.normal();
            feat[half + 2] = ind * std::sin(angle) + spec.dense_noise * rng.normal();
            for (std::size_t k = half + 3; k < ch; ++k) feat[k] = spec.dense_noise * rng.normal();
        }
    }
    return d;
}

// ---- saliency -------------------------------------------------------------------

DatasetHandle gen_saliency(const DatasetSpec& spec) {
    spec.validate();
    if (spec.task != TaskKind::Saliency) throw ConfigError("gen_saliency: wrong task");
    DatasetHandle d;
    d.spec = spec;
    const std::size_t n = spec.train_size + spec.eval_size;
    d.train = {0, spec.train_size};
    d.eval = {spec.train_size, n};

    Rng rng(mix_seed(spec.seed, 0x5A11E9C7ULL));
    const std::size_t g = spec.grid, px = g * g, ch = spec.channels;
    d.maps.resize(n * px);
    d.dense_x.resize(n * px * ch);
    d.fixation_points.resize(n);

    for (std::size_t i = 0; i < n; ++i) {
        // two-component Gaussian mixture over the grid
        struct Comp { double cx, cy, sigma, weight; };
        Comp comp[2];
        const double w0 = rng.uniform(0.3, 0.7);
        for (int k = 0; k < 2; ++k) {
            comp[k].cx = rng.uniform(0.2 * g, 0.8 * g);
            comp[k].cy = rng.uniform(0.2 * g, 0.8 * g);
            comp[k].sigma = rng.uniform(0.08 * g, 0.2 * g);
            comp[k].weight = k == 0 ? w0 : 1.0 - w0;
        }
        double total = 0.0;
        for (std::size_t r = 0; r < g; ++r)
            for (std::size_t c = 0; c < g; ++c) {
                double v = 0.0;
                for (const auto& cp : comp) {
                    const double dx = (static_cast<double>(c) + 0.5) - cp.cx;
                    const double dy = (static_cast<double>(r) + 0.5) - cp.cy;
                    v += cp.weight * std::exp(-(dx * dx + dy * dy) / (2.0 * cp.sigma * cp.sigma));
                }
                d.maps[i * px + r * g + c] = v;
                total += v;
            }
        for (std::size_t p = 0; p < px; ++p) d.maps[i * px + p] /= total;

        // fixations drawn from the same mixture
        auto& fix = d.fixation_points[i];
        fix.reserve(spec.fixations);
        for (std::size_t f = 0; f < spec.fixations; ++f) {
            int col = 0, row = 0;
            for (int attempt = 0; attempt < 100; ++attempt) {
                const Comp& cp = rng.uniform() < comp[0].weight ? comp[0] : comp[1];
                const double sx = cp.cx + cp.sigma * rng.normal();
                const double sy = cp.cy + cp.sigma * rng.normal();
                col = static_cast<int>(std::floor(sx));
                row = static_cast<int>(std::floor(sy));
                if (col >= 0 && col < static_cast<int>(g) && row >= 0 && row < static_cast<int>(g)) break;
                col = std::clamp(col, 0, static_cast<int>(g) - 1);
                row = std::clamp(row, 0, static_cast<int>(g) - 1);
            }
            fix.emplace_back(row, col);
        }

        // features: each half carries its own noisy encoding of the map
        const double lift = static_cast<double>(px); // map values scaled to O(1)
        const std::size_t half = ch / 2;
        for (std::size_t p = 0; p < px; ++p) {
            double* feat = &d.dense_x[(i * px + p) * ch];
            const double m = d.maps[i * px + p] * lift;
            feat[0] = m + spec.dense_noise * rng.normal();
            for (std::size_t k = 1; k < half; ++k) feat[k] = spec.dense_noise * rng.normal();
            feat[half] = std::sqrt(m) + spec.dense_noise * rng.normal();
            for (std::size_t k = half + 1; k < ch; ++k) feat[k] = spec.dense_noise * rng.normal();
        }
    }
    return d;
}

DatasetHandle generate(const DatasetSpec& spec) {
    switch (spec.task) {
        case TaskKind::Classification: return gen_classification(spec);
        case TaskKind::DenseSeg: return gen_dense(spec);
        case TaskKind::Saliency: return gen_saliency(spec);
    }
    throw ConfigError("generate: unknown task");
}

// ---- batching --------------------------------------------------------------------

std::vector<Batch> batches(const DatasetHandle& data, const Split& split, std::size_t batch_size,
                           std::uint64_t epoch_seed) {
    if (batch_size < 1) throw ConfigError("batches: batch_size must be at least 1");
    if (split.end > data.total() || split.begin > split.end) throw ConfigError("batches: split out of range");

    std::vector<std::size_t> order(split.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = split.begin + i;
    Rng rng(mix_seed(epoch_seed, 0xBA7C4E5DULL));
    rng.shuffle(order);

    const bool flat = data.spec.task == TaskKind::Classification;
    const std::size_t g = data.spec.grid, ch = data.spec.channels;
    const std::size_t width = data.sample_dim();

    std::vector<Batch> out;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t b = std::min(batch_size, order.size() - start);
        Batch batch;
        batch.indices.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(start + b));
        std::vector<double> xv(b * width);
        batch.labels.resize(b);
        for (std::size_t i = 0; i < b; ++i) {
            const std::size_t idx = batch.indices[i];
            const double* src = flat ? &data.x[idx * width] : &data.dense_x[idx * width];
            std::copy(src, src + width, &xv[i * width]);
            if (flat) {
                batch.labels[i] = data.y[idx];
            } else if (data.spec.task == TaskKind::DenseSeg) {
                batch.labels[i] = data.region_class[idx];
            } else {
                batch.labels[i] = 0;
            }
        }
        batch.x = flat ? Tensor::constant({b, width}, std::move(xv))
                       : Tensor::constant({b, g, g, ch}, std::move(xv));
        out.push_back(std::move(batch));
    }
    return out;
}

Tensor apply_view(const DatasetHandle& data, const Tensor& x, const std::vector<unsigned char>& mask) {
    const std::size_t ch = data.spec.task == TaskKind::Classification ? data.spec.dim : data.spec.channels;
    if (mask.size() != ch) throw ConfigError("apply_view: mask width mismatch");
    Tensor out = x;
    const std::size_t stride = ch;
    for (std::size_t base = 0; base + stride <= out.data.size(); base += stride) {
        for (std::size_t c = 0; c < stride; ++c) {
            if (!mask[c]) out.data[base + c] = 0.0;
        }
    }
    return out;
}

// ---- cache ------------------------------------------------------------------------

namespace {

constexpr const char* kDataMagic = "BIKD-CKPT v1";

// 17 significant digits round-trip any double exactly
std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

} // namespace

void save_dataset_cache(const DatasetHandle& d, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("dataset cache: cannot open " + path + " for writing");
    const auto& s = d.spec;
    os << kDataMagic << "\n";
    os << "kind=dataset\n";
    os << "task=" << task_name(s.task) << "\n";
    os << "seed=" << s.seed << "\n";
    os << "train_size=" << s.train_size << "\n";
    os << "eval_size=" << s.eval_size << "\n";
    os << "dim=" << s.dim << "\n";
    os << "classes=" << s.classes << "\n";
    os << "signal_a=" << fmt_double(s.signal_a) << "\n";
    os << "signal_b=" << fmt_double(s.signal_b) << "\n";
    os << "noise=" << fmt_double(s.noise) << "\n";
    os << "label_noise=" << fmt_double(s.label_noise) << "\n";
    os << "grid=" << s.grid << "\n";
    os << "channels=" << s.channels << "\n";
    os << "dense_noise=" << fmt_double(s.dense_noise) << "\n";
    os << "area_lo=" << fmt_double(s.area_lo) << "\n";
    os << "area_hi=" << fmt_double(s.area_hi) << "\n";
    os << "fixations=" << s.fixations << "\n";
    os << "END-HEADER\n";
    switch (s.task) {
        case TaskKind::Classification: {
            io::put_record(os, "x", d.x);
            std::vector<double> yv(d.y.begin(), d.y.end());
            io::put_record(os, "y", yv);
            break;
        }
        case TaskKind::DenseSeg: {
            io::put_record(os, "x", d.dense_x);
            io::put_record(os, "pixel_labels",
                           std::vector<double>(d.pixel_labels.begin(), d.pixel_labels.end()));
            io::put_record(os, "region_class",
                           std::vector<double>(d.region_class.begin(), d.region_class.end()));
            io::put_record(os, "region_mask", d.region_mask);
            break;
        }
        case TaskKind::Saliency: {
            io::put_record(os, "x", d.dense_x);
            io::put_record(os, "maps", d.maps);
            std::vector<double> flat;
            std::vector<double> counts;
            for (const auto& fix : d.fixation_points) {
                counts.push_back(static_cast<double>(fix.size()));
                for (auto [r, c] : fix) {
                    flat.push_back(r);
                    flat.push_back(c);
                }
            }
            io::put_record(os, "fixation_counts", counts);
            io::put_record(os, "fixations", flat);
            break;
        }
    }
    if (!os) throw IoError("dataset cache: write failed for " + path);
}

DatasetHandle load_dataset_cache(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("dataset cache: cannot open " + path);
    std::string line;
    if (!std::getline(is, line) || line != kDataMagic) {
        throw DataError("dataset cache: bad format line in " + path);
    }
    DatasetSpec s;
    while (std::getline(is, line)) {
        if (line == "END-HEADER") break;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw DataError("dataset cache: malformed header line: " + line);
        const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        if (key == "kind") {
            if (value != "dataset") throw DataError("dataset cache: not a dataset container");
        } else if (key == "task") s.task = task_from(value);
        else if (key == "seed") s.seed = std::stoull(value);
        else if (key == "train_size") s.train_size = std::stoull(value);
        else if (key == "eval_size") s.eval_size = std::stoull(value);
        else if (key == "dim") s.dim = std::stoull(value);
        else if (key == "classes") s.classes = std::stoull(value);
        else if (key == "signal_a") s.signal_a = std::stod(value);
        else if (key == "signal_b") s.signal_b = std::stod(value);
        else if (key == "noise") s.noise = std::stod(value);
        else if (key == "label_noise") s.label_noise = std::stod(value);
        else if (key == "grid") s.grid = std::stoull(value);
        else if (key == "channels") s.channels = std::stoull(value);
        else if (key == "dense_noise") s.dense_noise = std::stod(value);
        else if (key == "area_lo") s.area_lo = std::stod(value);
        else if (key == "area_hi") s.area_hi = std::stod(value);
        else if (key == "fixations") s.fixations = std::stoull(value);
        else throw DataError("dataset cache: unknown header key: " + key);
    }
    // the spec is the source of truth; regeneration is bit-identical
    return generate(s);
}

} // namespace bikd
