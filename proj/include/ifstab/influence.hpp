#pragma once

#include "ifstab/objectives.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ifstab {

struct InfluenceOptions {
    // Absolute damping override; unset means the relative default
    // 1e-6 * trace(H) / |gamma|.  Explicit 0 disables damping.
    std::optional<double> damping;
    double fd_step = 1e-4;   // penalty-Hessian finite-difference base step
    Index gamma_cap = 4096;  // refuse Hessians larger than this
};

struct HessianDiagnostics {
    double min_eig = 0.0;
    double max_eig = 0.0;
    double damping_used = 0.0;
};

struct InfluenceReport {
    std::vector<Vector> if_vectors;
    double v_index = kNegInf;
    double covariance_top_eig = 0.0;
    double hessian_min_eig = 0.0;
    double hessian_max_eig = 0.0;
    double damping_used = 0.0;
    double seconds = 0.0;
};

struct ShuffleBaselineResult {
    double mean_v = kNegInf;
    std::vector<double> per_repeat;
};

// Hessian of the full objective (ERM term + lambda * penalty) in gamma only.
// The ERM term is closed-form; the penalty block is built by central finite
// differences of the analytic penalty gradient and symmetrized.
Matrix gamma_hessian(const Vector& gamma, const FrozenFeatures& frozen,
                     const ObjectiveSpec& spec, double fd_step = 1e-4,
                     Index gamma_cap = 4096);

// Gradient of the unregularized per-domain loss; the penalty is never
// upweighted.
Vector domain_gamma_gradient(const Vector& gamma, const FrozenFeatures& frozen,
                             Index domain, LossFamily family);

// IF_e = -(H + damping I)^{-1} grad loss_e, via one symmetric factorization.
// Diagnostics carry the undamped extreme eigenvalues and the damping used.
std::vector<Vector> influence_vectors(const Vector& gamma,
                                      const FrozenFeatures& frozen,
                                      const ObjectiveSpec& spec,
                                      const InfluenceOptions& options,
                                      HessianDiagnostics* diagnostics = nullptr);

// Largest eigenvalue of Cov_e(v_e) with population divisor m, computed on
// the m x m Gram matrix of centered vectors.
double covariance_top_eigenvalue(const std::vector<Vector>& if_vectors);

// ln of that eigenvalue; -inf sentinel when the vectors coincide.
double v_index(const std::vector<Vector>& if_vectors);

InfluenceReport stability_metric(const DecomposedModel& model,
                                 const MultiDomainDataset& data,
                                 const ObjectiveSpec& spec,
                                 const InfluenceOptions& options);

// Shuffle baseline: repeat r scores the same learned model on
// shuffle_domains(data, seed + r).  The pooled Hessian is shuffle-invariant,
// so it is computed and factorized exactly once across repeats.
ShuffleBaselineResult shuffle_baseline(const DecomposedModel& model,
                                       const MultiDomainDataset& data,
                                       const ObjectiveSpec& spec,
                                       const InfluenceOptions& options,
                                       std::uint64_t seed, Index n_repeats);

void write_influence_json(const InfluenceReport& report,
                          const std::string& path);

}  // namespace ifstab
