#pragma once

#include "ifstab/objectives.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ifstab {

struct EarlyStopConfig {
    Index patience = 20;
    std::string metric = "mean-domain-loss";
};

struct TrainConfig {
    Index epochs = 500;
    double learning_rate = 0.05;
    std::optional<EarlyStopConfig> early_stop;
    std::uint64_t seed = 0;
    bool train_gamma_only = false;
    void validate() const;
};

struct TrainingTrace {
    std::vector<double> total_loss;
    std::vector<double> penalty;
    std::vector<std::vector<double>> domain_losses;  // [epoch][domain]
    Index best_epoch = -1;  // -1 when early stopping was off
};

struct TrainResult {
    DecomposedModel model;
    TrainingTrace trace;
};

// Full-batch gradient descent on L = mean domain loss + lambda(epoch) * R.
// gamma gradients are analytic; beta gradients come from backpropagation
// through the ReLU stack.  With early stopping, a per-domain 20% split is
// held out and the best-epoch parameters are returned; when an anneal
// schedule is present, best-epoch tracking starts at the switch epoch so the
// pre-anneal optimum cannot shadow the penalized one.
TrainResult train(const DecomposedModel& init, const MultiDomainDataset& data,
                  const ObjectiveSpec& objective, const TrainConfig& config);

// Gradient of the total objective with respect to beta at the given
// parameters (empty for identity extractors); exposed for gradient checks.
Vector beta_gradient(const DecomposedModel& model,
                     const MultiDomainDataset& data,
                     const ObjectiveSpec& objective);

void write_trace_csv(const TrainingTrace& trace, const std::string& path);

struct Checkpoint {
    DecomposedModel model;
    ObjectiveSpec objective;
    std::uint64_t seed = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ifstab
