#include "bikd/commands.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bikd/analysis.hpp"
#include "bikd/errors.hpp"
#include "bikd/sha256.hpp"
#include "bikd/trainer.hpp"

namespace bikd {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

void ensure_out_dir(const RunConfig& cfg) {
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + cfg.out_dir + ": " + ec.message());
}

std::string join_path(const RunConfig& cfg, const std::string& name) {
    return (fs::path(cfg.out_dir) / name).string();
}

void require_file(const std::string& path, const std::string& what) {
    if (!fs::exists(path)) throw ConfigError(what + " not found: " + path);
}

std::string metrics_csv_name(const std::string& model_name) {
    return "pretrain_" + model_name + "_metrics.csv";
}

void write_pretrain_metrics(const RunConfig& cfg, const std::string& model_name,
                            const PretrainResult& result) {
    const std::string path = join_path(cfg, metrics_csv_name(model_name));
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << "# bikd-metrics v1\n";
    os << "epoch,train_loss,eval_metric\n";
    os.precision(17);
    for (std::size_t e = 0; e < result.train_loss.size(); ++e) {
        os << (e + 1) << "," << result.train_loss[e] << "," << result.eval_metric[e] << "\n";
    }
    if (!os) throw IoError("write failed for " + path);
}

// pretraining of one model from scratch, with its complementary view
PretrainResult pretrain_one(const RunConfig& cfg, const DatasetHandle& data, std::size_t index,
                            ModelBundle& out_model) {
    out_model = init_model(cfg.model_names[index], cfg.arch_for_task(), cfg.model_seed(index));
    TransferConfig pc = cfg.pretrain_cfg;
    pc.seed = cfg.pretrain_seed(index);
    const ViewPolicy policy = cfg.view_policy();
    const auto& view = policy.visible[index % policy.visible.size()];
    return pretrain(out_model, data, pc, &view);
}

std::string primary_metric(const RunConfig& cfg) {
    switch (cfg.data.task) {
        case TaskKind::Classification: return "top1";
        case TaskKind::DenseSeg: return "mIoU";
        case TaskKind::Saliency: return "CC";
    }
    throw ConfigError("unknown task");
}

double metric_of(const MetricList& metrics, const std::string& name) {
    for (const auto& [k, v] : metrics) {
        if (k == name) return v;
    }
    throw ContractError("metric " + name + " missing");
}

ojson cases_json(const CaseStats& c) {
    ojson o = ojson::object();
    o["total"] = c.total;
    o["case1"] = c.case1;
    o["case2"] = c.case2;
    o["case3"] = c.case3;
    o["frac1"] = c.frac1;
    o["frac2"] = c.frac2;
    o["frac3"] = c.frac3;
    return o;
}

CaseStats case_stats_for(const ModelBundle& a, const ModelBundle& b, const DatasetHandle& data) {
    const std::size_t n = data.eval.size(), dim = data.spec.dim, c = data.spec.classes;
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

struct AnalyzeOutput {
    std::vector<std::string> files; // relative names written
};

AnalyzeOutput analyze_into(const RunConfig& cfg, const DatasetHandle& data) {
    AnalyzeOutput out;
    const std::string metric = primary_metric(cfg);

    std::vector<ModelBundle> before, after;
    for (std::size_t i = 0; i < cfg.model_count; ++i) {
        require_file(cfg.pretrained_path(i), "pretrained checkpoint");
        require_file(cfg.after_path(i), "transferred checkpoint");
        before.push_back(load_checkpoint(cfg.pretrained_path(i)));
        after.push_back(load_checkpoint(cfg.after_path(i)));
    }

    std::vector<const ModelBundle*> before_ptrs;
    for (const auto& m : before) before_ptrs.push_back(&m);
    const double ensemble = ensemble_eval(before_ptrs, data, data.eval);

    ojson j;
    j["schema_version"] = 1;
    j["task"] = task_name(cfg.data.task);
    j["metric"] = metric;
    j["ensemble_before"] = ensemble;
    j["models"] = ojson::array();
    for (std::size_t i = 0; i < cfg.model_count; ++i) {
        const double b = metric_of(evaluate_model(before[i], data, data.eval), metric);
        const double a = metric_of(evaluate_model(after[i], data, data.eval), metric);
        ojson m;
        m["name"] = cfg.model_names[i];
        m["before"] = b;
        m["after"] = a;
        m["delta"] = a - b;
        if (ensemble != b) {
            m["recovered"] = recovered(b, a, ensemble);
        } else {
            m["recovered"] = nullptr;
        }
        j["models"].push_back(std::move(m));
    }

    if (cfg.data.task == TaskKind::Classification && cfg.model_count == 2) {
        j["cases_before"] = cases_json(case_stats_for(before[0], before[1], data));
        j["cases_after"] = cases_json(case_stats_for(after[0], after[1], data));
    }

    if (cfg.data.task == TaskKind::Classification) {
        Tensor fa_before = tap_features(before[0], data, data.eval);
        Tensor fb_before = tap_features(before[1 % cfg.model_count], data, data.eval);
        Tensor fa_after = tap_features(after[0], data, data.eval);
        Tensor fb_after = tap_features(after[1 % cfg.model_count], data, data.eval);
        const std::size_t max_k = std::min(fa_before.shape[1], fb_before.shape[1]);
        const std::size_t k = cfg.cca_k == 0 ? max_k : std::min(cfg.cca_k, max_k);
        auto cca_before = cca(fa_before, fb_before, k);
        auto cca_after = cca(fa_after, fb_after, k);
        ojson c;
        c["k"] = k;
        c["mean_before"] = cca_before.mean_top_k;
        c["mean_after"] = cca_after.mean_top_k;
        j["cca"] = std::move(c);

        const std::string cca_path = join_path(cfg, "cca.csv");
        std::ofstream cs(cca_path);
        if (!cs) throw IoError("cannot open " + cca_path + " for writing");
        cs << "# bikd-cca v1\n";
        cs << "component,before,after\n";
        cs.precision(17);
        for (std::size_t i = 0; i < k; ++i) {
            cs << i << "," << cca_before.correlations[i] << "," << cca_after.correlations[i] << "\n";
        }
        out.files.push_back("cca.csv");
    }

    const std::string path = join_path(cfg, "analysis.json");
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << "bikd-analysis v1\n" << j.dump(2) << "\n";
    out.files.push_back("analysis.json");
    return out;
}

} // namespace

void cmd_pretrain(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    DatasetHandle data = generate(cfg.data);
    for (std::size_t i = 0; i < cfg.model_count; ++i) {
        if (cfg.pretrain_model >= 0 && static_cast<std::size_t>(cfg.pretrain_model) != i) continue;
        ModelBundle model;
        auto result = pretrain_one(cfg, data, i, model);
        save_checkpoint(model, cfg.pretrained_path(i));
        write_pretrain_metrics(cfg, cfg.model_names[i], result);
    }
}

void cmd_transfer(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    DatasetHandle data = generate(cfg.data);
    std::vector<ModelBundle> models;
    for (std::size_t i = 0; i < cfg.model_count; ++i) {
        require_file(cfg.pretrained_path(i), "pretrained checkpoint");
        models.push_back(load_checkpoint(cfg.pretrained_path(i)));
    }
    std::vector<ModelBundle*> ptrs;
    for (auto& m : models) ptrs.push_back(&m);

    TransferConfig tc = cfg.transfer_cfg;
    auto report = run_transfer(ptrs, data, tc);
    write_report(report, join_path(cfg, "report.json"));
    for (std::size_t i = 0; i < cfg.model_count; ++i) {
        save_checkpoint(models[i], cfg.after_path(i));
    }
}

void cmd_analyze(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    DatasetHandle data = generate(cfg.data);
    analyze_into(cfg, data);
}

void cmd_experiment(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    std::vector<std::pair<std::string, std::string>> manifest; // stage, relative path

    DatasetHandle data = generate(cfg.data);
    save_dataset_cache(data, join_path(cfg, "dataset.bin"));
    manifest.emplace_back("generate", "dataset.bin");

    for (std::size_t i = 0; i < cfg.model_count; ++i) {
        ModelBundle model;
        auto result = pretrain_one(cfg, data, i, model);
        save_checkpoint(model, cfg.pretrained_path(i));
        write_pretrain_metrics(cfg, cfg.model_names[i], result);
        manifest.emplace_back("pretrain", cfg.model_names[i] + "_pretrained.ckpt");
        manifest.emplace_back("pretrain", metrics_csv_name(cfg.model_names[i]));
    }

    cmd_transfer(cfg);
    manifest.emplace_back("transfer", "report.json");
    for (std::size_t i = 0; i < cfg.model_count; ++i) {
        manifest.emplace_back("transfer", cfg.model_names[i] + "_after.ckpt");
    }

    auto analyzed = analyze_into(cfg, data);
    for (const auto& f : analyzed.files) manifest.emplace_back("analyze", f);

    const std::string path = join_path(cfg, "manifest.txt");
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << "bikd-manifest v1\n";
    os << "seed=" << cfg.seed << "\n";
    for (const auto& [stage, file] : manifest) {
        os << "stage " << stage << " " << file << " " << sha256_file(join_path(cfg, file)) << "\n";
    }
    if (!os) throw IoError("write failed for " + path);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    try {
        if (args.empty() || args[0] == "--help" || args[0] == "-h" || args[0] == "help") {
            out << "usage: bikd <pretrain|transfer|analyze|experiment> --config <path>\n"
                   "            [--set key=value]... [--out <dir>] [--seed <int>]\n";
            return args.empty() ? 2 : 0;
        }
        const std::string command = args[0];
        std::string config_path;
        std::vector<std::string> overrides;
        for (std::size_t i = 1; i < args.size(); ++i) {
            const std::string& a = args[i];
            auto need_value = [&](const std::string& flag) -> const std::string& {
                if (i + 1 >= args.size()) throw ConfigError(flag + " needs a value");
                return args[++i];
            };
            if (a == "--config") {
                config_path = need_value(a);
            } else if (a == "--set") {
                overrides.push_back(need_value(a));
            } else if (a == "--out") {
                overrides.push_back("run.out_dir=" + need_value(a));
            } else if (a == "--seed") {
                overrides.push_back("run.seed=" + need_value(a));
            } else {
                throw ConfigError("unknown flag: " + a);
            }
        }
        if (config_path.empty()) throw ConfigError("--config is required");
        RunConfig cfg = load_run_config(config_path, overrides);

        if (command == "pretrain") cmd_pretrain(cfg);
        else if (command == "transfer") cmd_transfer(cfg);
        else if (command == "analyze") cmd_analyze(cfg);
        else if (command == "experiment") cmd_experiment(cfg);
        else throw ConfigError("unknown command: " + command);
        return 0;
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace bikd
