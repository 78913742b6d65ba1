#pragma once

#include "ifstab/dataset.hpp"
#include "ifstab/influence.hpp"
#include "ifstab/objectives.hpp"
#include "ifstab/trainer.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ifstab {

enum class DatasetKind { two_var_sem, bayes_net, colored_digits, idx };

struct DatasetConfig {
    DatasetKind kind = DatasetKind::two_var_sem;
    std::uint64_t seed = 0;
    Index n_per_domain = 1000;
    // two_var_sem
    double sigma1_sq = 1.0;
    double sigma2_sq = 3.0;
    std::optional<double> x1_second_moment;
    // bayes_net
    std::vector<double> sigmas = {0.2, 0.7, 1.2, 1.7, 2.2};
    Index block_dim = 5;
    std::optional<Matrix> w_a;
    std::optional<Matrix> w_b;
    // colored_digits
    std::vector<double> flip_rates = {0.0, 0.1};
    double label_noise = 0.25;
    Index shape_dim = 8;
    Index color_dim = 8;
    double jitter_sd = 0.5;
    // idx
    std::string images_path;
    std::string labels_path;
    int binarize_threshold = 4;
};

MultiDomainDataset build_dataset(const DatasetConfig& cfg);

struct ModelConfig {
    ExtractorKind extractor = ExtractorKind::identity;
    std::vector<Index> hidden = {256, 256};
    std::uint64_t init_seed = 0;
    std::string checkpoint;  // when set, load instead of initializing
};

struct InfluenceConfig {
    InfluenceOptions options;
    Index shuffle_repeats = 10;
    std::uint64_t shuffle_seed = 0;
    bool retrain_on_shuffle = false;
};

enum class ExperimentKind { diversity_sweep, lambda_grid, bayes_table, oracle_check };

struct OracleCheckCase {
    double sigma1_sq = 1.0;
    double sigma2_sq = 3.0;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::oracle_check;
    std::uint64_t master_seed = 0;
    Index workers = 0;  // 0: one per hardware thread, capped by run count
    // diversity_sweep
    Index x_count = 51;
    double x_max = 0.1;
    double base_flip = 0.2;
    // lambda_grid
    std::vector<double> lambdas = {0.0, 50.0, 100.0, 500.0, 1000.0};
    std::vector<PenaltyKind> algorithms = {PenaltyKind::irm, PenaltyKind::vrex};
    Index models_per_lambda = 20;
    std::vector<double> ood_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    Index n_eval_per_domain = 2000;
    double acc_filter_center = 0.75;
    double acc_filter_width = 0.1;
    // bayes_table
    Index repetitions = 20;
    double lambda_irm = 10.0;
    double lambda_vrex = 1000.0;
    // oracle_check
    std::vector<OracleCheckCase> cases = {{1.0, 3.0}, {0.04, 4.84}};
};

struct HarnessConfig {
    DatasetConfig dataset;
    ModelConfig model;
    ObjectiveSpec objective;
    TrainConfig training;
    InfluenceConfig influence;
    std::optional<ExperimentConfig> experiment;
};

// Strict parse: unknown keys anywhere are FormatErrors naming the JSON path.
HarnessConfig parse_config_file(const std::string& path);
HarnessConfig parse_config_text(const std::string& text);

// Replaces every section seed from one master value (documented fan-out).
void override_seeds(HarnessConfig& cfg, std::uint64_t seed);

}  // namespace ifstab
