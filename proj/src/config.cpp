#include "ifstab/config.hpp"

#include "ifstab/generators.hpp"
#include "ifstab/idx.hpp"
#include "ifstab/rng.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace ifstab {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw FormatError("config error at " + path + ": " + what);
}

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) fail(path, "expected an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : j.items())
        if (!ok.count(key)) fail(path, "unknown key \"" + key + "\"");
}

template <typename T>
T get_as(const json& j, const std::string& path) {
    try {
        return j.get<T>();
    } catch (const json::exception& err) {
        fail(path, err.what());
    }
}

template <typename T>
void read_field(const json& j, const std::string& path, const char* key, T& out) {
    if (j.contains(key)) out = get_as<T>(j.at(key), path + "." + key);
}

Matrix matrix_from_json(const json& j, const std::string& path) {
    if (!j.is_array() || j.empty() || !j.front().is_array())
        fail(path, "expected a 2-D array");
    const Index rows = static_cast<Index>(j.size());
    const Index cols = static_cast<Index>(j.front().size());
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r) {
        const auto& row = j.at(static_cast<std::size_t>(r));
        if (!row.is_array() || static_cast<Index>(row.size()) != cols)
            fail(path, "ragged rows");
        for (Index c = 0; c < cols; ++c)
            m(r, c) = get_as<double>(row.at(static_cast<std::size_t>(c)), path);
    }
    return m;
}

DatasetKind dataset_kind_from_string(const std::string& s, const std::string& path) {
    if (s == "two_var_sem") return DatasetKind::two_var_sem;
    if (s == "bayes_net") return DatasetKind::bayes_net;
    if (s == "colored_digits") return DatasetKind::colored_digits;
    if (s == "idx") return DatasetKind::idx;
    fail(path, "unknown dataset kind \"" + s + "\"");
}

void parse_dataset(const json& j, const std::string& path, DatasetConfig& out) {
    check_keys(j, path,
               {"kind", "seed", "n_per_domain", "sigma1_sq", "sigma2_sq",
                "x1_second_moment", "sigmas", "block_dim", "w_a", "w_b",
                "flip_rates", "label_noise", "shape_dim", "color_dim",
                "jitter_sd", "images_path", "labels_path", "binarize_threshold"});
    if (j.contains("kind"))
        out.kind = dataset_kind_from_string(
            get_as<std::string>(j.at("kind"), path + ".kind"), path + ".kind");
    read_field(j, path, "seed", out.seed);
    read_field(j, path, "n_per_domain", out.n_per_domain);
    read_field(j, path, "sigma1_sq", out.sigma1_sq);
    read_field(j, path, "sigma2_sq", out.sigma2_sq);
    if (j.contains("x1_second_moment"))
        out.x1_second_moment =
            get_as<double>(j.at("x1_second_moment"), path + ".x1_second_moment");
    read_field(j, path, "sigmas", out.sigmas);
    read_field(j, path, "block_dim", out.block_dim);
    if (j.contains("w_a")) out.w_a = matrix_from_json(j.at("w_a"), path + ".w_a");
    if (j.contains("w_b")) out.w_b = matrix_from_json(j.at("w_b"), path + ".w_b");
    read_field(j, path, "flip_rates", out.flip_rates);
    read_field(j, path, "label_noise", out.label_noise);
    read_field(j, path, "shape_dim", out.shape_dim);
    read_field(j, path, "color_dim", out.color_dim);
    read_field(j, path, "jitter_sd", out.jitter_sd);
    read_field(j, path, "images_path", out.images_path);
    read_field(j, path, "labels_path", out.labels_path);
    read_field(j, path, "binarize_threshold", out.binarize_threshold);
}

void parse_model(const json& j, const std::string& path, ModelConfig& out) {
    check_keys(j, path, {"extractor", "hidden", "init_seed", "checkpoint"});
    if (j.contains("extractor")) {
        const auto s = get_as<std::string>(j.at("extractor"), path + ".extractor");
        try {
            out.extractor = extractor_kind_from_string(s);
        } catch (const ParameterError& err) {
            fail(path + ".extractor", err.what());
        }
    }
    read_field(j, path, "hidden", out.hidden);
    read_field(j, path, "init_seed", out.init_seed);
    read_field(j, path, "checkpoint", out.checkpoint);
}

void parse_objective(const json& j, const std::string& path, ObjectiveSpec& out) {
    check_keys(j, path, {"loss_family", "penalty", "lambda", "anneal"});
    try {
        if (j.contains("loss_family"))
            out.loss_family = loss_family_from_string(
                get_as<std::string>(j.at("loss_family"), path + ".loss_family"));
        if (j.contains("penalty"))
            out.penalty = penalty_kind_from_string(
                get_as<std::string>(j.at("penalty"), path + ".penalty"));
    } catch (const ParameterError& err) {
        fail(path, err.what());
    }
    read_field(j, path, "lambda", out.lambda);
    if (j.contains("anneal")) {
        const auto apath = path + ".anneal";
        check_keys(j.at("anneal"), apath, {"pre_lambda", "pre_epochs"});
        AnnealSchedule a;
        read_field(j.at("anneal"), apath, "pre_lambda", a.pre_lambda);
        read_field(j.at("anneal"), apath, "pre_epochs", a.pre_epochs);
        out.anneal = a;
    }
}

void parse_training(const json& j, const std::string& path, TrainConfig& out) {
    check_keys(j, path,
               {"epochs", "learning_rate", "early_stop", "seed",
                "train_gamma_only"});
    read_field(j, path, "epochs", out.epochs);
    read_field(j, path, "learning_rate", out.learning_rate);
    if (j.contains("early_stop")) {
        const auto epath = path + ".early_stop";
        check_keys(j.at("early_stop"), epath, {"patience", "metric"});
        EarlyStopConfig es;
        read_field(j.at("early_stop"), epath, "patience", es.patience);
        read_field(j.at("early_stop"), epath, "metric", es.metric);
        out.early_stop = es;
    }
    read_field(j, path, "seed", out.seed);
    read_field(j, path, "train_gamma_only", out.train_gamma_only);
}

void parse_influence(const json& j, const std::string& path, InfluenceConfig& out) {
    check_keys(j, path,
               {"damping", "fd_step", "gamma_cap", "shuffle_repeats",
                "shuffle_seed", "retrain_on_shuffle"});
    if (j.contains("damping"))
        out.options.damping = get_as<double>(j.at("damping"), path + ".damping");
    read_field(j, path, "fd_step", out.options.fd_step);
    read_field(j, path, "gamma_cap", out.options.gamma_cap);
    read_field(j, path, "shuffle_repeats", out.shuffle_repeats);
    read_field(j, path, "shuffle_seed", out.shuffle_seed);
    read_field(j, path, "retrain_on_shuffle", out.retrain_on_shuffle);
}

ExperimentKind experiment_kind_from_string(const std::string& s,
                                           const std::string& path) {
    if (s == "diversity_sweep") return ExperimentKind::diversity_sweep;
    if (s == "lambda_grid") return ExperimentKind::lambda_grid;
    if (s == "bayes_table") return ExperimentKind::bayes_table;
    if (s == "oracle_check") return ExperimentKind::oracle_check;
    fail(path, "unknown experiment kind \"" + s + "\"");
}

void parse_experiment(const json& j, const std::string& path,
                      ExperimentConfig& out) {
    check_keys(j, path,
               {"kind", "master_seed", "workers", "x_count", "x_max",
                "base_flip", "lambdas", "algorithms", "models_per_lambda",
                "ood_grid", "n_eval_per_domain", "acc_filter_center",
                "acc_filter_width", "repetitions", "lambda_irm", "lambda_vrex",
                "cases"});
    if (j.contains("kind"))
        out.kind = experiment_kind_from_string(
            get_as<std::string>(j.at("kind"), path + ".kind"), path + ".kind");
    read_field(j, path, "master_seed", out.master_seed);
    read_field(j, path, "workers", out.workers);
    read_field(j, path, "x_count", out.x_count);
    read_field(j, path, "x_max", out.x_max);
    read_field(j, path, "base_flip", out.base_flip);
    read_field(j, path, "lambdas", out.lambdas);
    if (j.contains("algorithms")) {
        out.algorithms.clear();
        const auto apath = path + ".algorithms";
        for (const auto& item : j.at("algorithms")) {
            try {
                out.algorithms.push_back(penalty_kind_from_string(
                    get_as<std::string>(item, apath)));
            } catch (const ParameterError& err) {
                fail(apath, err.what());
            }
        }
    }
    read_field(j, path, "models_per_lambda", out.models_per_lambda);
    read_field(j, path, "ood_grid", out.ood_grid);
    read_field(j, path, "n_eval_per_domain", out.n_eval_per_domain);
    read_field(j, path, "acc_filter_center", out.acc_filter_center);
    read_field(j, path, "acc_filter_width", out.acc_filter_width);
    read_field(j, path, "repetitions", out.repetitions);
    read_field(j, path, "lambda_irm", out.lambda_irm);
    read_field(j, path, "lambda_vrex", out.lambda_vrex);
    if (j.contains("cases")) {
        out.cases.clear();
        const auto cpath = path + ".cases";
        for (const auto& item : j.at("cases")) {
            check_keys(item, cpath, {"sigma1_sq", "sigma2_sq"});
            OracleCheckCase c;
            read_field(item, cpath, "sigma1_sq", c.sigma1_sq);
            read_field(item, cpath, "sigma2_sq", c.sigma2_sq);
            out.cases.push_back(c);
        }
    }
}

}  // namespace

MultiDomainDataset build_dataset(const DatasetConfig& cfg) {
    switch (cfg.kind) {
        case DatasetKind::two_var_sem:
            return gen_two_var_sem(cfg.sigma1_sq, cfg.sigma2_sq, cfg.n_per_domain,
                                   cfg.x1_second_moment, cfg.seed);
        case DatasetKind::bayes_net: {
            Matrix w_a, w_b;
            if (cfg.w_a || cfg.w_b) {
                require(cfg.w_a && cfg.w_b,
                        "bayes_net needs both w_a and w_b or neither");
                w_a = *cfg.w_a;
                w_b = *cfg.w_b;
            } else {
                std::tie(w_a, w_b) = default_bayes_weights(cfg.block_dim);
            }
            return gen_bayes_net(cfg.sigmas, cfg.n_per_domain, w_a, w_b, cfg.seed);
        }
        case DatasetKind::colored_digits:
            return gen_colored_digits(cfg.flip_rates, cfg.n_per_domain,
                                      cfg.label_noise, cfg.shape_dim,
                                      cfg.color_dim, cfg.jitter_sd, cfg.seed);
        default: {
            require(!cfg.images_path.empty() && !cfg.labels_path.empty(),
                    "idx dataset needs images_path and labels_path");
            MultiDomainDataset data;
            data.task_kind = TaskKind::classification;
            data.domains.push_back(load_idx(cfg.images_path, cfg.labels_path,
                                            cfg.binarize_threshold));
            return data;
        }
    }
}

HarnessConfig parse_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& err) {
        throw FormatError(std::string("config is not valid JSON: ") + err.what());
    }
    check_keys(j, "$",
               {"dataset", "model", "objective", "training", "influence",
                "experiment"});
    HarnessConfig cfg;
    if (j.contains("dataset")) parse_dataset(j.at("dataset"), "$.dataset", cfg.dataset);
    if (j.contains("model")) parse_model(j.at("model"), "$.model", cfg.model);
    if (j.contains("objective"))
        parse_objective(j.at("objective"), "$.objective", cfg.objective);
    if (j.contains("training"))
        parse_training(j.at("training"), "$.training", cfg.training);
    if (j.contains("influence"))
        parse_influence(j.at("influence"), "$.influence", cfg.influence);
    if (j.contains("experiment")) {
        ExperimentConfig e;
        parse_experiment(j.at("experiment"), "$.experiment", e);
        cfg.experiment = e;
    }
    cfg.objective.validate();
    cfg.training.validate();
    return cfg;
}

HarnessConfig parse_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

void override_seeds(HarnessConfig& cfg, std::uint64_t seed) {
    cfg.dataset.seed = derive_seed(seed, kStreamData);
    cfg.model.init_seed = derive_seed(seed, kStreamInit);
    cfg.training.seed = derive_seed(seed, kStreamSplit);
    cfg.influence.shuffle_seed = derive_seed(seed, kStreamShuffle);
    if (cfg.experiment) cfg.experiment->master_seed = seed;
}

}  // namespace ifstab
