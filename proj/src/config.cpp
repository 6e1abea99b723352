#include "bikd/config.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "bikd/errors.hpp"
#include "bikd/rng.hpp"

namespace bikd {

namespace {

const std::vector<std::string> kKnownKeys = {
    "run.seed", "run.out_dir",
    "data.task", "data.seed", "data.train_size", "data.eval_size", "data.dim", "data.classes",
    "data.signal_a", "data.signal_b", "data.noise", "data.label_noise", "data.grid", "data.channels",
    "data.dense_noise", "data.area_lo", "data.area_hi", "data.fixations", "data.views",
    "model.count", "model.names", "model.hidden",
    "pretrain.epochs", "pretrain.lr", "pretrain.batch_size", "pretrain.weight_decay",
    "pretrain.model",
    "transfer.method", "transfer.epochs", "transfer.lr", "transfer.batch_size",
    "transfer.temperature", "transfer.weight_decay", "transfer.kl_direction",
    "transfer.partition_rule",
    "loss.lambda_ce", "loss.lambda_dice", "loss.lambda_cls_correct", "loss.lambda_cls_incorrect",
    "loss.dice_eps", "loss.cc_floor",
    "analyze.cca_k",
};

bool known_key(const std::string& key) {
    for (const auto& k : kKnownKeys) {
        if (k == key) return true;
    }
    return false;
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

void parse_line(std::map<std::string, std::string>& kv, const std::string& raw,
                const std::string& where) {
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') return;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("config: malformed line (" + where + "): " + raw);
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!known_key(key)) throw ConfigError("config: unknown key: " + key);
    kv[key] = value;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const std::uint64_t out = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + " expects an unsigned integer, got '" + v + "'");
    }
}

long long to_i64(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long long out = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + " expects an integer, got '" + v + "'");
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
    }
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const std::string t = trim(item);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

RunConfig build(const std::map<std::string, std::string>& kv) {
    RunConfig c;
    c.pretrain_cfg.method = Method::SoloFinetune;
    c.pretrain_cfg.learning_rate = 1e-3;
    c.pretrain_cfg.epochs = 20;
    c.transfer_cfg.learning_rate = 1e-4;

    auto get = [&](const std::string& key) -> const std::string* {
        auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };

    if (auto* v = get("run.seed")) c.seed = to_u64("run.seed", *v);
    if (auto* v = get("run.out_dir")) c.out_dir = *v;

    if (auto* v = get("data.task")) c.data.task = task_from(*v);
    c.data.seed = c.seed;
    if (auto* v = get("data.seed")) c.data.seed = to_u64("data.seed", *v);
    if (auto* v = get("data.train_size")) c.data.train_size = to_u64("data.train_size", *v);
    if (auto* v = get("data.eval_size")) c.data.eval_size = to_u64("data.eval_size", *v);
    if (auto* v = get("data.dim")) c.data.dim = to_u64("data.dim", *v);
    if (auto* v = get("data.classes")) c.data.classes = to_u64("data.classes", *v);
    if (auto* v = get("data.signal_a")) c.data.signal_a = to_double("data.signal_a", *v);
    if (auto* v = get("data.signal_b")) c.data.signal_b = to_double("data.signal_b", *v);
    if (auto* v = get("data.noise")) c.data.noise = to_double("data.noise", *v);
    if (auto* v = get("data.label_noise")) c.data.label_noise = to_double("data.label_noise", *v);
    if (auto* v = get("data.grid")) c.data.grid = to_u64("data.grid", *v);
    if (auto* v = get("data.channels")) c.data.channels = to_u64("data.channels", *v);
    if (auto* v = get("data.dense_noise")) c.data.dense_noise = to_double("data.dense_noise", *v);
    if (auto* v = get("data.area_lo")) c.data.area_lo = to_double("data.area_lo", *v);
    if (auto* v = get("data.area_hi")) c.data.area_hi = to_double("data.area_hi", *v);
    if (auto* v = get("data.fixations")) c.data.fixations = to_u64("data.fixations", *v);
    if (auto* v = get("data.views")) c.views = *v;

    if (auto* v = get("model.count")) c.model_count = to_u64("model.count", *v);
    if (auto* v = get("model.names")) c.model_names = split_list(*v);
    if (auto* v = get("model.hidden")) {
        c.hidden.clear();
        for (const auto& item : split_list(*v)) c.hidden.push_back(to_u64("model.hidden", item));
    }

    if (auto* v = get("pretrain.epochs")) c.pretrain_cfg.epochs = to_u64("pretrain.epochs", *v);
    if (auto* v = get("pretrain.lr")) c.pretrain_cfg.learning_rate = to_double("pretrain.lr", *v);
    if (auto* v = get("pretrain.batch_size")) {
        c.pretrain_cfg.batch_size = to_u64("pretrain.batch_size", *v);
    }
    if (auto* v = get("pretrain.weight_decay")) {
        c.pretrain_cfg.weight_decay = to_double("pretrain.weight_decay", *v);
    }
    if (auto* v = get("pretrain.model")) {
        c.pretrain_model = static_cast<int>(to_i64("pretrain.model", *v));
    }

    if (auto* v = get("transfer.method")) c.transfer_cfg.method = method_from(*v);
    if (auto* v = get("transfer.epochs")) c.transfer_cfg.epochs = to_u64("transfer.epochs", *v);
    if (auto* v = get("transfer.lr")) c.transfer_cfg.learning_rate = to_double("transfer.lr", *v);
    if (auto* v = get("transfer.batch_size")) {
        c.transfer_cfg.batch_size = to_u64("transfer.batch_size", *v);
    }
    if (auto* v = get("transfer.temperature")) {
        c.transfer_cfg.weights.temperature = to_double("transfer.temperature", *v);
    }
    if (auto* v = get("transfer.weight_decay")) {
        c.transfer_cfg.weight_decay = to_double("transfer.weight_decay", *v);
    }
    if (auto* v = get("transfer.kl_direction")) {
        if (*v == "forward") c.transfer_cfg.kl_direction = KlDirection::Forward;
        else if (*v == "reverse") c.transfer_cfg.kl_direction = KlDirection::Reverse;
        else throw ConfigError("config: transfer.kl_direction must be forward or reverse");
    }
    if (auto* v = get("transfer.partition_rule")) {
        if (*v == "confidence") c.transfer_cfg.partition_rule = PartitionRule::Confidence;
        else if (*v == "loss") c.transfer_cfg.partition_rule = PartitionRule::Loss;
        else throw ConfigError("config: transfer.partition_rule must be confidence or loss");
    } else if (c.data.task != TaskKind::Classification) {
        c.transfer_cfg.partition_rule = PartitionRule::Loss;
    }

    LossWeights& w = c.transfer_cfg.weights;
    if (auto* v = get("loss.lambda_ce")) w.lambda_ce = to_double("loss.lambda_ce", *v);
    if (auto* v = get("loss.lambda_dice")) w.lambda_dice = to_double("loss.lambda_dice", *v);
    if (auto* v = get("loss.lambda_cls_correct")) {
        w.lambda_cls_correct = to_double("loss.lambda_cls_correct", *v);
    }
    if (auto* v = get("loss.lambda_cls_incorrect")) {
        w.lambda_cls_incorrect = to_double("loss.lambda_cls_incorrect", *v);
    }
    if (auto* v = get("loss.dice_eps")) w.dice_eps = to_double("loss.dice_eps", *v);
    if (auto* v = get("loss.cc_floor")) w.cc_floor = to_double("loss.cc_floor", *v);
    c.pretrain_cfg.weights = w;
    c.pretrain_cfg.partition_rule = c.transfer_cfg.partition_rule;

    if (auto* v = get("analyze.cca_k")) c.cca_k = to_u64("analyze.cca_k", *v);

    // tasks and seeds propagate everywhere
    c.pretrain_cfg.task = c.data.task;
    c.transfer_cfg.task = c.data.task;
    c.transfer_cfg.seed = c.transfer_seed();

    if (c.model_names.empty()) {
        for (std::size_t i = 0; i < c.model_count; ++i) {
            c.model_names.push_back("m" + std::to_string(i + 1));
        }
    }
    c.validate();
    return c;
}

} // namespace

ArchDescriptor RunConfig::arch_for_task() const {
    ArchDescriptor arch;
    arch.hidden = hidden;
    switch (data.task) {
        case TaskKind::Classification:
            arch.input_dim = data.dim;
            arch.output_dim = data.classes;
            arch.head = HeadKind::ClassLogits;
            break;
        case TaskKind::DenseSeg:
            arch.input_dim = data.channels;
            arch.output_dim = data.classes + 1; // class channels plus the mask channel
            arch.head = HeadKind::DenseLogits;
            break;
        case TaskKind::Saliency:
            arch.input_dim = data.channels;
            arch.output_dim = 1;
            arch.head = HeadKind::SaliencyMap;
            break;
    }
    return arch;
}

ViewPolicy RunConfig::view_policy() const {
    const std::size_t channels = data.task == TaskKind::Classification ? data.dim : data.channels;
    if (views == "none") return ViewPolicy::full(model_count, channels);
    if (views == "half") {
        if (model_count != 2) throw ConfigError("config: data.views=half needs model.count=2");
        return ViewPolicy::halves(channels);
    }
    if (views == "overlap3") {
        if (model_count != 3) throw ConfigError("config: data.views=overlap3 needs model.count=3");
        return ViewPolicy::overlapping_thirds(channels);
    }
    throw ConfigError("config: data.views must be none, half, or overlap3");
}

std::uint64_t RunConfig::model_seed(std::size_t index) const {
    return mix_seed(seed, 100 + index);
}

std::uint64_t RunConfig::pretrain_seed(std::size_t index) const {
    return mix_seed(seed, 200 + index);
}

std::uint64_t RunConfig::transfer_seed() const {
    return mix_seed(seed, 300);
}

std::string RunConfig::pretrained_path(std::size_t index) const {
    return (std::filesystem::path(out_dir) / (model_names[index] + "_pretrained.ckpt")).string();
}

std::string RunConfig::after_path(std::size_t index) const {
    return (std::filesystem::path(out_dir) / (model_names[index] + "_after.ckpt")).string();
}

void RunConfig::validate() const {
    data.validate();
    if (model_count < 1) throw ConfigError("config: model.count must be at least 1");
    if (model_names.size() != model_count) {
        throw ConfigError("config: model.names must list exactly model.count names");
    }
    if (hidden.empty()) throw ConfigError("config: model.hidden must list at least one width");
    if (pretrain_model < -1 || pretrain_model >= static_cast<int>(model_count)) {
        throw ConfigError("config: pretrain.model outside [-1, model.count)");
    }
    arch_for_task().validate();
    view_policy(); // throws on impossible view/model combinations
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        parse_line(kv, line, path + ":" + std::to_string(line_no));
    }
    for (const auto& o : overrides) parse_line(kv, o, "--set");
    return build(kv);
}

RunConfig run_config_from_overrides(const std::vector<std::string>& overrides) {
    std::map<std::string, std::string> kv;
    for (const auto& o : overrides) parse_line(kv, o, "--set");
    return build(kv);
}

} // namespace bikd
