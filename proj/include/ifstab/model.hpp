#pragma once

#include "ifstab/dataset.hpp"

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace ifstab {

enum class ExtractorKind { identity, mlp };

std::string to_string(ExtractorKind k);
ExtractorKind extractor_kind_from_string(const std::string& s);

// Per-domain second-moment summaries of the augmented features, enough to
// evaluate squared losses and their derivatives without touching rows again.
//   a[e] = phi~^T phi~ / n_e   ((f+1) x (f+1))
//   b[e] = phi~^T Y / n_e      ((f+1) x t)
//   c[e] = ||Y||_F^2 / n_e
struct QuadStats {
    std::vector<Matrix> a;
    std::vector<Matrix> b;
    std::vector<double> c;
    Matrix a_mean;
};

// Extracted features with the extractor pinned: the only view influence and
// objective computations are allowed to read.
class FrozenFeatures {
public:
    FrozenFeatures() = default;
    FrozenFeatures(Matrix features, Matrix targets,
                   std::vector<std::pair<Index, Index>> spans, TaskKind task);

    const Matrix& features() const { return features_; }
    const Matrix& targets() const { return targets_; }
    TaskKind task() const { return task_; }
    Index domain_count() const { return static_cast<Index>(spans_.size()); }
    Index feature_width() const { return features_.cols(); }
    Index target_dim() const { return targets_.cols(); }
    Index total_rows() const { return features_.rows(); }
    std::pair<Index, Index> span(Index domain) const;
    Index domain_size(Index domain) const;

    // Lazily built, then immutable; safe under concurrent readers.
    const QuadStats& quad_stats() const;

private:
    // The once_flag lives behind a pointer so the class stays movable.
    struct StatsCell {
        std::once_flag once;
        std::unique_ptr<QuadStats> value;
    };

    Matrix features_;  // n x f
    Matrix targets_;   // n x t
    std::vector<std::pair<Index, Index>> spans_;
    TaskKind task_ = TaskKind::regression;

    mutable std::unique_ptr<StatsCell> stats_ = std::make_unique<StatsCell>();
};

// Predictor split into extractor phi(x; beta) and linear head with
// parameters gamma.  gamma = vec of the augmented (f+1) x t weight matrix,
// column-major, bias in the last row.  beta holds per layer the weight
// matrix (column-major) followed by the bias vector; empty for identity.
struct DecomposedModel {
    ExtractorKind extractor = ExtractorKind::identity;
    Index input_width = 0;
    std::vector<Index> hidden;  // widths of ReLU layers; empty for identity
    Index output_width = 0;
    Vector beta;
    Vector gamma;

    Index feature_width() const {
        return hidden.empty() ? input_width : hidden.back();
    }
    Index gamma_length() const { return (feature_width() + 1) * output_width; }
    void validate() const;
};

DecomposedModel make_identity_model(Index input_width, Index output_width);

// Weights uniform in +/-sqrt(6/(fan_in+fan_out)), biases zero; head weights
// initialized the same way.  Deterministic in seed.
DecomposedModel make_mlp_model(Index input_width, std::vector<Index> hidden,
                               Index output_width, std::uint64_t seed);

// Activations recorded during extraction, for backpropagation.
// act[0] = input; act[l+1] = relu(act[l] W_l + 1 b_l^T); pre[l] holds the
// pre-activation of layer l.
struct ForwardCache {
    std::vector<Matrix> act;
    std::vector<Matrix> pre;
};

Matrix extract(const DecomposedModel& model, const Matrix& inputs);
ForwardCache extract_with_cache(const DecomposedModel& model,
                                const Matrix& inputs);

// Head application: phi * W + 1 b^T with (W; b^T) unpacked from gamma.
Matrix head_forward(const Vector& gamma, const Matrix& phi, Index output_width);

Matrix forward(const DecomposedModel& model, const Matrix& inputs);

FrozenFeatures freeze(const DecomposedModel& model,
                      const MultiDomainDataset& data);

// Maps gamma back to the augmented weight matrix view (f+1) x t.
Eigen::Map<const Matrix> head_matrix(const Vector& gamma, Index feature_width,
                                     Index output_width);

}  // namespace ifstab
