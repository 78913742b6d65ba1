#include "ifstab/generators.hpp"

#include <cmath>
#include <string>

namespace ifstab {

MultiDomainDataset gen_two_var_sem(double sigma1_sq, double sigma2_sq,
                                   Index n_per_domain,
                                   std::optional<double> x1_second_moment,
                                   std::uint64_t seed) {
    require(sigma1_sq > 0 && sigma2_sq > 0, "noise variances must be positive");
    require(n_per_domain >= 2, "need at least 2 examples per domain");
    const double s2m = x1_second_moment.value_or(1.0);
    require(s2m > 0, "x1 second moment must be positive");
    const double x1_scale = std::sqrt(s2m);

    Rng rng(derive_seed(seed, kStreamData));
    MultiDomainDataset out;
    out.task_kind = TaskKind::regression;
    const double sig_sq[2] = {sigma1_sq, sigma2_sq};
    for (int e = 0; e < 2; ++e) {
        DomainSample d;
        d.domain_id = "e" + std::to_string(e);
        d.features.resize(n_per_domain, 2);
        d.targets.resize(n_per_domain, 1);
        const double noise_sd = std::sqrt(sig_sq[e]);
        for (Index i = 0; i < n_per_domain; ++i) {
            const double x1 = x1_scale * rng.normal();
            const double y = x1 + rng.normal();
            const double x2 = y + noise_sd * rng.normal();
            d.features(i, 0) = x1;
            d.features(i, 1) = x2;
            d.targets(i, 0) = y;
        }
        d.generator_params = {{"sigma_sq", sig_sq[e]},
                              {"x1_second_moment", s2m}};
        out.domains.push_back(std::move(d));
    }
    return out;
}

std::pair<Matrix, Matrix> default_bayes_weights(Index block_dim) {
    require(block_dim >= 1, "block dimension must be positive");
    // Pinned stream so the default mechanism is identical everywhere.
    Rng rng(derive_seed(0x6d656368u, kStreamData));
    Matrix w_a(block_dim, block_dim), w_b(block_dim, block_dim);
    rng.fill_normal(w_a);
    rng.fill_normal(w_b);
    return {w_a, w_b};
}

MultiDomainDataset gen_bayes_net(const std::vector<double>& sigmas,
                                 Index n_per_domain, const Matrix& w_a,
                                 const Matrix& w_b, std::uint64_t seed) {
    require(sigmas.size() >= 2, "need at least two domains");
    require(n_per_domain >= 2, "need at least 2 examples per domain");
    const Index k = w_a.rows();
    require(w_a.cols() == k && w_b.rows() == k && w_b.cols() == k,
            "mechanism matrices must be square and equally sized");
    for (double s : sigmas) require(s > 0, "noise scales must be positive");

    Rng rng(derive_seed(seed, kStreamData));
    MultiDomainDataset out;
    out.task_kind = TaskKind::regression;
    Vector x1(k), y(k), x2(k);
    for (std::size_t e = 0; e < sigmas.size(); ++e) {
        const double sd = sigmas[e];
        DomainSample d;
        d.domain_id = "e" + std::to_string(e);
        d.features.resize(n_per_domain, 2 * k);
        d.targets.resize(n_per_domain, k);
        for (Index i = 0; i < n_per_domain; ++i) {
            for (Index j = 0; j < k; ++j) x1(j) = sd * rng.normal();
            y.noalias() = w_a.transpose() * x1;  // row convention: y = x1 W_a
            for (Index j = 0; j < k; ++j) y(j) += rng.normal();
            x2.noalias() = w_b.transpose() * y;
            for (Index j = 0; j < k; ++j) x2(j) += sd * rng.normal();
            d.features.row(i).head(k) = x1.transpose();
            d.features.row(i).tail(k) = x2.transpose();
            d.targets.row(i) = y.transpose();
        }
        d.generator_params = {{"sigma", sd}};
        out.domains.push_back(std::move(d));
    }
    return out;
}

MultiDomainDataset gen_colored_digits(const std::vector<double>& flip_rates,
                                      Index n_per_domain, double label_noise,
                                      Index shape_dim, Index color_dim,
                                      double jitter_sd, std::uint64_t seed) {
    require(!flip_rates.empty(), "need at least one domain");
    for (double p : flip_rates)
        require(p >= 0.0 && p <= 1.0, "flip rate outside [0,1]");
    require(label_noise >= 0.0 && label_noise <= 1.0,
            "label noise outside [0,1]");
    require(shape_dim >= 0 && color_dim >= 0 && shape_dim + color_dim >= 1,
            "need at least one feature dimension");
    require(jitter_sd >= 0.0, "jitter sd must be non-negative");
    require(n_per_domain >= 1, "need at least 1 example per domain");

    Rng rng(derive_seed(seed, kStreamData));
    MultiDomainDataset out;
    out.task_kind = TaskKind::classification;
    for (std::size_t e = 0; e < flip_rates.size(); ++e) {
        const double p = flip_rates[e];
        DomainSample d;
        d.domain_id = "e" + std::to_string(e);
        d.features.resize(n_per_domain, shape_dim + color_dim);
        d.targets.resize(n_per_domain, 1);
        for (Index i = 0; i < n_per_domain; ++i) {
            const bool y = rng.bernoulli(0.5);
            const bool shape_bit = y != rng.bernoulli(label_noise);
            const bool color_bit = y != rng.bernoulli(p);
            const double shape_mean = shape_bit ? 1.0 : -1.0;
            const double color_mean = color_bit ? 1.0 : -1.0;
            for (Index c = 0; c < shape_dim; ++c)
                d.features(i, c) = shape_mean + jitter_sd * rng.normal();
            for (Index c = 0; c < color_dim; ++c)
                d.features(i, shape_dim + c) = color_mean + jitter_sd * rng.normal();
            d.targets(i, 0) = y ? 1.0 : 0.0;
        }
        d.generator_params = {{"flip_rate", p},
                              {"label_noise", label_noise},
                              {"jitter_sd", jitter_sd}};
        out.domains.push_back(std::move(d));
    }
    return out;
}

}  // namespace ifstab
