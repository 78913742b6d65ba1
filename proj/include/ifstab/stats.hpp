#pragma once

#include "ifstab/model.hpp"

#include <vector>

namespace ifstab {

struct AccuracyReport {
    double worst = 0.0;
    std::vector<double> per_domain;
};

// Min over domains of mean 0/1 accuracy; classification heads predict 1 when
// the logit is strictly positive.
AccuracyReport worst_domain_accuracy(const DecomposedModel& model,
                                     const std::vector<DomainSample>& domains);

double domain_accuracy(const DecomposedModel& model, const DomainSample& domain);

// Product-moment correlation; constant input is an error.
double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

// Rank correlation with average ranks for ties.
double spearman(const std::vector<double>& xs, const std::vector<double>& ys);

}  // namespace ifstab
