#pragma once

#include "ifstab/common.hpp"
#include "ifstab/rng.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ifstab {

enum class TaskKind { classification, regression };

std::string to_string(TaskKind k);
TaskKind task_kind_from_string(const std::string& s);

// One training domain: n rows of features with aligned targets.
// Classification targets are a single 0/1 column.
struct DomainSample {
    std::string domain_id;
    Matrix features;  // n x d
    Matrix targets;   // n x t
    std::map<std::string, double> generator_params;

    Index size() const { return features.rows(); }
};

struct LabeledExample {
    Vector features;
    Vector target;
};

struct MultiDomainDataset {
    TaskKind task_kind = TaskKind::regression;
    std::vector<DomainSample> domains;

    Index domain_count() const { return static_cast<Index>(domains.size()); }
    Index feature_dim() const;
    Index target_dim() const;
    Index total_size() const;
    LabeledExample example(Index domain, Index row) const;

    // Throws ParameterError unless every domain is non-empty with consistent
    // widths and (for classification) 0/1 single-column targets.
    void validate() const;
};

// The permutation both the shuffler and the influence baseline apply to the
// pooled rows; shared so the two stay in lockstep for a given seed.
std::vector<Index> pooled_permutation(Index total, Rng& rng);

// Pools all rows, permutes them, and deals them back into domains of the
// original sizes.  Pooled multiset of examples is preserved exactly.
MultiDomainDataset shuffle_domains(const MultiDomainDataset& data, std::uint64_t seed);

// CSV with header domain_id,target,f0,...  Multi-column targets are
// semicolon-joined inside the target field.
void write_dataset_csv(const MultiDomainDataset& data, const std::string& path);

// JSON sidecar: task kind, widths, per-domain sizes and generator_params.
void write_dataset_meta(const MultiDomainDataset& data, const std::string& path);

}  // namespace ifstab
