#pragma once

#include "ifstab/dataset.hpp"

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace ifstab {

// Two-domain structural model with one causal and one anti-causal regressor:
//   x1 ~ P_x,  y = x1 + N(0,1),  x2 = y + N(0, sigma_e^2).
// Features are (x1, x2), target y (regression).  P_x defaults to N(0,1);
// x1_second_moment rescales it to sqrt(s) * N(0,1).
MultiDomainDataset gen_two_var_sem(double sigma1_sq, double sigma2_sq,
                                   Index n_per_domain,
                                   std::optional<double> x1_second_moment,
                                   std::uint64_t seed);

// Chain network over blocks:
//   x1 ~ N(0, sigma_e^2 I),  y = x1 W_a + N(0, I),  x2 = y W_b + N(0, sigma_e^2 I).
// Row-vector convention; features = concat(x1, x2), target y.  One domain per
// entry of sigmas (the entries are standard deviations).
MultiDomainDataset gen_bayes_net(const std::vector<double>& sigmas,
                                 Index n_per_domain, const Matrix& w_a,
                                 const Matrix& w_b, std::uint64_t seed);

// Fixed default mechanism weights: entries drawn N(0,1) from a pinned
// internal seed so every machine sees the same (W_a, W_b).
std::pair<Matrix, Matrix> default_bayes_weights(Index block_dim);

// Two-channel stand-in for color-vs-digit image data.  Latent bit c uniform,
// label y = c.  The shape channel encodes y flipped with label_noise, the
// color channel encodes y flipped with the domain's rate p_e.  A channel is
// its bit mapped to +/-1, repeated across its dims, plus N(0, jitter_sd^2)
// per coordinate.  A shape-only predictor tops out at 1 - label_noise.
MultiDomainDataset gen_colored_digits(const std::vector<double>& flip_rates,
                                      Index n_per_domain, double label_noise,
                                      Index shape_dim, Index color_dim,
                                      double jitter_sd, std::uint64_t seed);

}  // namespace ifstab
