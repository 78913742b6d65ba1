#include "ifstab/objectives.hpp"

#include <cmath>

namespace ifstab {

std::string to_string(LossFamily f) {
    return f == LossFamily::logistic ? "logistic" : "squared";
}

std::string to_string(PenaltyKind p) {
    switch (p) {
        case PenaltyKind::none: return "none";
        case PenaltyKind::irm: return "irm";
        default: return "vrex";
    }
}

LossFamily loss_family_from_string(const std::string& s) {
    if (s == "logistic") return LossFamily::logistic;
    if (s == "squared") return LossFamily::squared;
    throw ParameterError("unknown loss family: " + s);
}

PenaltyKind penalty_kind_from_string(const std::string& s) {
    if (s == "none") return PenaltyKind::none;
    if (s == "irm") return PenaltyKind::irm;
    if (s == "vrex") return PenaltyKind::vrex;
    throw ParameterError("unknown penalty kind: " + s);
}

void ObjectiveSpec::validate() const {
    require(lambda >= 0.0, "lambda must be non-negative");
    if (anneal) require(anneal->pre_epochs >= 0, "anneal pre_epochs must be >= 0");
}

namespace {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + e^z) without overflow for large |z|.
double softplus(double z) {
    return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

Index head_cols(const Vector& gamma, Index feature_width) {
    require(gamma.size() % (feature_width + 1) == 0,
            "gamma length is not a multiple of feature width + 1");
    return gamma.size() / (feature_width + 1);
}

// Logits for one domain of a single-output logistic head.
Vector domain_logits(const Vector& gamma, const FrozenFeatures& frozen,
                     Index domain) {
    const Index f = frozen.feature_width();
    require(head_cols(gamma, f) == 1, "logistic loss expects a single output");
    require(frozen.targets().cols() == 1, "logistic loss expects one target column");
    const auto [b, e] = frozen.span(domain);
    const auto wt = head_matrix(gamma, f, 1);
    return (frozen.features().middleRows(b, e - b) * wt.topRows(f)).array() +
           wt(f, 0);
}

// (1/n) Phi~^T u for one domain; u is any per-example vector.
Vector lift_through_features(const Vector& u, const FrozenFeatures& frozen,
                             Index domain) {
    const Index f = frozen.feature_width();
    const auto [b, e] = frozen.span(domain);
    const Index n = e - b;
    Vector g(f + 1);
    g.head(f).noalias() = frozen.features().middleRows(b, n).transpose() * u;
    g(f) = u.sum();
    return g / static_cast<double>(n);
}

// d/dw of the squared-loss domain risk under a scalar head multiplier, at w=1.
double squared_dummy_derivative(const Eigen::Map<const Matrix>& wt,
                                const QuadStats& st, Index domain) {
    const auto& a = st.a[static_cast<std::size_t>(domain)];
    const auto& bm = st.b[static_cast<std::size_t>(domain)];
    return 2.0 * ((wt.transpose() * (a * wt)).trace() -
                  (wt.transpose() * bm).trace());
}

}  // namespace

double domain_loss(const Vector& gamma, const FrozenFeatures& frozen,
                   Index domain, LossFamily family) {
    const Index f = frozen.feature_width();
    if (family == LossFamily::logistic) {
        const auto [b, e] = frozen.span(domain);
        const Vector z = domain_logits(gamma, frozen, domain);
        const auto y = frozen.targets().col(0).segment(b, e - b);
        double acc = 0.0;
        for (Index i = 0; i < z.size(); ++i)
            acc += softplus(z(i)) - y(i) * z(i);
        return acc / static_cast<double>(z.size());
    }
    const auto& st = frozen.quad_stats();
    const Index t = head_cols(gamma, f);
    const auto wt = head_matrix(gamma, f, t);
    const auto& a = st.a[static_cast<std::size_t>(domain)];
    const auto& bm = st.b[static_cast<std::size_t>(domain)];
    return (wt.transpose() * (a * wt)).trace() -
           2.0 * (wt.transpose() * bm).trace() +
           st.c[static_cast<std::size_t>(domain)];
}

Vector domain_loss_gradient(const Vector& gamma, const FrozenFeatures& frozen,
                            Index domain, LossFamily family) {
    const Index f = frozen.feature_width();
    if (family == LossFamily::logistic) {
        const auto [b, e] = frozen.span(domain);
        const Vector z = domain_logits(gamma, frozen, domain);
        Vector r = z.unaryExpr([](double v) { return sigmoid(v); });
        r -= frozen.targets().col(0).segment(b, e - b);
        return lift_through_features(r, frozen, domain);
    }
    const auto& st = frozen.quad_stats();
    const Index t = head_cols(gamma, f);
    const auto wt = head_matrix(gamma, f, t);
    Matrix g = 2.0 * (st.a[static_cast<std::size_t>(domain)] * wt -
                      st.b[static_cast<std::size_t>(domain)]);
    return Eigen::Map<const Vector>(g.data(), g.size());
}

namespace {

// D_e and its gamma-gradient for the IRM dummy-classifier penalty.
std::pair<double, Vector> irm_domain_term(const Vector& gamma,
                                          const FrozenFeatures& frozen,
                                          Index domain, LossFamily family) {
    const Index f = frozen.feature_width();
    if (family == LossFamily::logistic) {
        const auto [b, e] = frozen.span(domain);
        const Vector z = domain_logits(gamma, frozen, domain);
        const auto y = frozen.targets().col(0).segment(b, e - b);
        const Vector s = z.unaryExpr([](double v) { return sigmoid(v); });
        const double d = (s - y).dot(z) / static_cast<double>(z.size());
        // d/dgamma of (1/n) sum (sigma(z)-y) z: product rule through z.
        const Vector u =
            (s.array() * (1.0 - s.array()) * z.array() + s.array() - y.array())
                .matrix();
        return {d, lift_through_features(u, frozen, domain)};
    }
    const auto& st = frozen.quad_stats();
    const Index t = head_cols(gamma, f);
    const auto wt = head_matrix(gamma, f, t);
    const double d = squared_dummy_derivative(wt, st, domain);
    Matrix g = 2.0 * (2.0 * st.a[static_cast<std::size_t>(domain)] * wt -
                      st.b[static_cast<std::size_t>(domain)]);
    return {d, Eigen::Map<const Vector>(g.data(), g.size())};
}

}  // namespace

double irm_penalty(const Vector& gamma, const FrozenFeatures& frozen,
                   LossFamily family) {
    double acc = 0.0;
    for (Index d = 0; d < frozen.domain_count(); ++d) {
        const Index f = frozen.feature_width();
        if (family == LossFamily::logistic) {
            const auto [b, e] = frozen.span(d);
            const Vector z = domain_logits(gamma, frozen, d);
            const auto y = frozen.targets().col(0).segment(b, e - b);
            const Vector s = z.unaryExpr([](double v) { return sigmoid(v); });
            const double term = (s - y).dot(z) / static_cast<double>(z.size());
            acc += term * term;
        } else {
            const auto& st = frozen.quad_stats();
            const Index t = head_cols(gamma, f);
            const auto wt = head_matrix(gamma, f, t);
            const double term = squared_dummy_derivative(wt, st, d);
            acc += term * term;
        }
    }
    return acc;
}

double vrex_penalty(const Vector& gamma, const FrozenFeatures& frozen,
                    LossFamily family) {
    const Index m = frozen.domain_count();
    Vector losses(m);
    for (Index d = 0; d < m; ++d)
        losses(d) = domain_loss(gamma, frozen, d, family);
    const double mean = losses.mean();
    return (losses.array() - mean).square().sum();
}

double penalty_value(const Vector& gamma, const FrozenFeatures& frozen,
                     const ObjectiveSpec& spec) {
    switch (spec.penalty) {
        case PenaltyKind::none: return 0.0;
        case PenaltyKind::irm: return irm_penalty(gamma, frozen, spec.loss_family);
        default: return vrex_penalty(gamma, frozen, spec.loss_family);
    }
}

Vector penalty_gamma_gradient(const Vector& gamma, const FrozenFeatures& frozen,
                              const ObjectiveSpec& spec) {
    const Index m = frozen.domain_count();
    Vector grad = Vector::Zero(gamma.size());
    if (spec.penalty == PenaltyKind::none) return grad;
    if (spec.penalty == PenaltyKind::irm) {
        for (Index d = 0; d < m; ++d) {
            const auto [value, dgrad] =
                irm_domain_term(gamma, frozen, d, spec.loss_family);
            grad += 2.0 * value * dgrad;
        }
        return grad;
    }
    // vrex: cross terms through the shared mean cancel because the
    // deviations sum to zero, leaving 2 sum_e (l_e - lbar) grad l_e.
    Vector losses(m);
    for (Index d = 0; d < m; ++d)
        losses(d) = domain_loss(gamma, frozen, d, spec.loss_family);
    const double mean = losses.mean();
    for (Index d = 0; d < m; ++d)
        grad += 2.0 * (losses(d) - mean) *
                domain_loss_gradient(gamma, frozen, d, spec.loss_family);
    return grad;
}

double total_loss(const Vector& gamma, const FrozenFeatures& frozen,
                  const ObjectiveSpec& spec) {
    spec.validate();
    const Index m = frozen.domain_count();
    double base = 0.0;
    for (Index d = 0; d < m; ++d)
        base += domain_loss(gamma, frozen, d, spec.loss_family);
    base /= static_cast<double>(m);
    if (!std::isfinite(base)) throw NumericError("mean domain loss is not finite");
    double pen = penalty_value(gamma, frozen, spec);
    if (!std::isfinite(pen)) throw NumericError("penalty value is not finite");
    return base + spec.lambda * pen;
}

Vector total_gamma_gradient(const Vector& gamma, const FrozenFeatures& frozen,
                            const ObjectiveSpec& spec) {
    spec.validate();
    const Index m = frozen.domain_count();
    Vector grad = Vector::Zero(gamma.size());
    for (Index d = 0; d < m; ++d)
        grad += domain_loss_gradient(gamma, frozen, d, spec.loss_family);
    grad /= static_cast<double>(m);
    if (spec.lambda != 0.0 && spec.penalty != PenaltyKind::none)
        grad += spec.lambda * penalty_gamma_gradient(gamma, frozen, spec);
    if (!grad.allFinite()) throw NumericError("gamma gradient is not finite");
    return grad;
}

Matrix output_gradients(const Vector& gamma, const FrozenFeatures& frozen,
                        const ObjectiveSpec& spec) {
    spec.validate();
    const Index f = frozen.feature_width();
    const Index t = head_cols(gamma, f);
    const Index m = frozen.domain_count();
    const double inv_m = 1.0 / static_cast<double>(m);

    Vector losses;
    double mean_loss = 0.0;
    if (spec.penalty == PenaltyKind::vrex && spec.lambda != 0.0) {
        losses.resize(m);
        for (Index d = 0; d < m; ++d)
            losses(d) = domain_loss(gamma, frozen, d, spec.loss_family);
        mean_loss = losses.mean();
    }

    Matrix g(frozen.total_rows(), t);
    for (Index d = 0; d < m; ++d) {
        const auto [b, e] = frozen.span(d);
        const Index n = e - b;
        const double inv_n = 1.0 / static_cast<double>(n);
        const auto y = frozen.targets().middleRows(b, n);
        const Matrix z =
            head_forward(gamma, frozen.features().middleRows(b, n), t);

        Matrix base(n, t);  // d loss_e / d z, per example
        if (spec.loss_family == LossFamily::logistic) {
            base = (z.unaryExpr([](double v) { return sigmoid(v); }) - y) * inv_n;
        } else {
            base = 2.0 * inv_n * (z - y);
        }

        Matrix rows = inv_m * base;
        if (spec.lambda != 0.0 && spec.penalty == PenaltyKind::irm) {
            if (spec.loss_family == LossFamily::logistic) {
                const Vector s =
                    z.col(0).unaryExpr([](double v) { return sigmoid(v); });
                const double dval =
                    (s - y.col(0)).dot(z.col(0)) * inv_n;
                const Vector du = (s.array() * (1.0 - s.array()) * z.col(0).array() +
                                   s.array() - y.col(0).array())
                                      .matrix() *
                                  inv_n;
                rows.col(0) += spec.lambda * 2.0 * dval * du;
            } else {
                const double dval =
                    2.0 * inv_n * (z.cwiseProduct(z - y)).sum();
                rows += spec.lambda * 2.0 * dval * (2.0 * inv_n) *
                        (2.0 * z - y).eval();
            }
        } else if (spec.lambda != 0.0 && spec.penalty == PenaltyKind::vrex) {
            rows += spec.lambda * 2.0 * (losses(d) - mean_loss) * base;
        }
        g.middleRows(b, n) = rows;
    }
    if (!g.allFinite()) throw NumericError("output gradients are not finite");
    return g;
}

}  // namespace ifstab
