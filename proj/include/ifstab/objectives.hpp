#pragma once

#include "ifstab/model.hpp"

#include <optional>
#include <string>

namespace ifstab {

enum class LossFamily { logistic, squared };
enum class PenaltyKind { none, irm, vrex };

std::string to_string(LossFamily f);
std::string to_string(PenaltyKind p);
LossFamily loss_family_from_string(const std::string& s);
PenaltyKind penalty_kind_from_string(const std::string& s);

struct AnnealSchedule {
    double pre_lambda = 1.0;
    Index pre_epochs = 190;
};

struct ObjectiveSpec {
    LossFamily loss_family = LossFamily::logistic;
    PenaltyKind penalty = PenaltyKind::none;
    double lambda = 0.0;
    std::optional<AnnealSchedule> anneal;

    // Effective weight during training: pre_lambda before the switch epoch,
    // the target lambda afterwards.
    double lambda_at(Index epoch) const {
        if (anneal && epoch < anneal->pre_epochs) return anneal->pre_lambda;
        return lambda;
    }
    void validate() const;
};

// Mean per-example loss over one domain.  Logistic expects a single 0/1
// target column; squared is the mean squared residual norm.
double domain_loss(const Vector& gamma, const FrozenFeatures& frozen,
                   Index domain, LossFamily family);

// Gradient of the unregularized per-domain loss with respect to gamma.
Vector domain_loss_gradient(const Vector& gamma, const FrozenFeatures& frozen,
                            Index domain, LossFamily family);

// Sum over domains of the squared derivative of the domain loss with respect
// to a scalar multiplier on the head output, taken at 1.
double irm_penalty(const Vector& gamma, const FrozenFeatures& frozen,
                   LossFamily family);

// Sum of squared deviations of per-domain losses from their mean.
double vrex_penalty(const Vector& gamma, const FrozenFeatures& frozen,
                    LossFamily family);

double penalty_value(const Vector& gamma, const FrozenFeatures& frozen,
                     const ObjectiveSpec& spec);

// Analytic gradient of the penalty term R alone (no lambda factor).
Vector penalty_gamma_gradient(const Vector& gamma, const FrozenFeatures& frozen,
                              const ObjectiveSpec& spec);

// L = (1/m) sum_e loss_e + lambda * R, and its exact gamma-gradient.
double total_loss(const Vector& gamma, const FrozenFeatures& frozen,
                  const ObjectiveSpec& spec);
Vector total_gamma_gradient(const Vector& gamma, const FrozenFeatures& frozen,
                            const ObjectiveSpec& spec);

// Per-example derivative of the total objective with respect to the head
// outputs (n x t); the backpropagation entry point for extractor training.
Matrix output_gradients(const Vector& gamma, const FrozenFeatures& frozen,
                        const ObjectiveSpec& spec);

}  // namespace ifstab
