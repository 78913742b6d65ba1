#include "ifstab/stats.hpp"

#include <algorithm>
#include <cmath>

namespace ifstab {

double domain_accuracy(const DecomposedModel& model, const DomainSample& domain) {
    require(domain.targets.cols() == 1, "accuracy expects one target column");
    const Matrix logits = forward(model, domain.features);
    require(logits.cols() == 1, "accuracy expects a single-output head");
    Index hits = 0;
    for (Index i = 0; i < logits.rows(); ++i) {
        const double predicted = logits(i, 0) > 0.0 ? 1.0 : 0.0;
        if (predicted == domain.targets(i, 0)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

AccuracyReport worst_domain_accuracy(const DecomposedModel& model,
                                     const std::vector<DomainSample>& domains) {
    require(!domains.empty(), "accuracy needs at least one domain");
    AccuracyReport report;
    report.worst = 1.0;
    for (const auto& d : domains) {
        report.per_domain.push_back(domain_accuracy(model, d));
        report.worst = std::min(report.worst, report.per_domain.back());
    }
    return report;
}

namespace {

void check_paired(const std::vector<double>& xs, const std::vector<double>& ys) {
    require(xs.size() == ys.size(), "correlation inputs differ in length");
    require(xs.size() >= 2, "correlation needs at least 2 points");
}

double mean_of(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

// Average ranks, ties sharing the mean of their positions (1-based).
std::vector<double> average_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double shared = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    check_paired(xs, ys);
    const double mx = mean_of(xs);
    const double my = mean_of(ys);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    require(sxx > 0.0 && syy > 0.0,
            "correlation is undefined for a constant input");
    return sxy / std::sqrt(sxx * syy);
}

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    check_paired(xs, ys);
    return pearson(average_ranks(xs), average_ranks(ys));
}

}  // namespace ifstab
