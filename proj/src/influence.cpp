#include "ifstab/influence.hpp"

#include "ifstab/dataset.hpp"
#include "ifstab/rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>

namespace ifstab {

namespace {

double stable_sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// Closed-form Hessian of the unpenalized mean domain loss.
Matrix erm_hessian(const Vector& gamma, const FrozenFeatures& frozen,
                   LossFamily family) {
    const Index f = frozen.feature_width();
    const Index m = frozen.domain_count();
    if (family == LossFamily::squared) {
        const auto& st = frozen.quad_stats();
        const Index t = gamma.size() / (f + 1);
        Matrix h = Matrix::Zero(gamma.size(), gamma.size());
        for (Index c = 0; c < t; ++c)
            h.block(c * (f + 1), c * (f + 1), f + 1, f + 1) = 2.0 * st.a_mean;
        return h;
    }
    require(gamma.size() == f + 1, "logistic loss expects a single output");
    const auto wt = head_matrix(gamma, f, 1);
    Matrix h = Matrix::Zero(f + 1, f + 1);
    for (Index d = 0; d < m; ++d) {
        const auto [b, e] = frozen.span(d);
        const Index n = e - b;
        const auto phi = frozen.features().middleRows(b, n);
        Vector z = (phi * wt.topRows(f)).array() + wt(f, 0);
        const Vector w = z.unaryExpr([](double v) {
            const double s = stable_sigmoid(v);
            return s * (1.0 - s);
        });
        const Matrix phi_w = phi.array().colwise() * w.array();
        const double scale = 1.0 / (static_cast<double>(m) * static_cast<double>(n));
        h.topLeftCorner(f, f).noalias() += scale * (phi.transpose() * phi_w);
        h.topRightCorner(f, 1).noalias() +=
            scale * phi_w.colwise().sum().transpose();
        h(f, f) += scale * w.sum();
    }
    h.bottomLeftCorner(1, f) = h.topRightCorner(f, 1).transpose();
    return h;
}

}  // namespace

Matrix gamma_hessian(const Vector& gamma, const FrozenFeatures& frozen,
                     const ObjectiveSpec& spec, double fd_step, Index gamma_cap) {
    spec.validate();
    require(fd_step > 0.0, "finite-difference step must be positive");
    require(gamma.size() <= gamma_cap,
            "gamma has " + std::to_string(gamma.size()) +
                " entries, above the Hessian cap of " + std::to_string(gamma_cap));
    Matrix h = erm_hessian(gamma, frozen, spec.loss_family);
    if (spec.lambda != 0.0 && spec.penalty != PenaltyKind::none) {
        const Index k = gamma.size();
        Matrix hp(k, k);
        Vector probe = gamma;
        for (Index i = 0; i < k; ++i) {
            const double step = fd_step * std::max(1.0, std::abs(gamma(i)));
            probe(i) = gamma(i) + step;
            const Vector gp = penalty_gamma_gradient(probe, frozen, spec);
            probe(i) = gamma(i) - step;
            const Vector gm = penalty_gamma_gradient(probe, frozen, spec);
            probe(i) = gamma(i);
            hp.col(i) = (gp - gm) / (2.0 * step);
        }
        h += spec.lambda * 0.5 * (hp + hp.transpose());
    }
    if (!h.allFinite()) throw NumericError("hessian has non-finite entries");
    return h;
}

Vector domain_gamma_gradient(const Vector& gamma, const FrozenFeatures& frozen,
                             Index domain, LossFamily family) {
    return domain_loss_gradient(gamma, frozen, domain, family);
}

namespace {

struct FactorizedHessian {
    Eigen::LLT<Matrix> llt;
    HessianDiagnostics diag;
};

FactorizedHessian factorize(const Vector& gamma, const FrozenFeatures& frozen,
                            const ObjectiveSpec& spec,
                            const InfluenceOptions& options) {
    const Matrix h =
        gamma_hessian(gamma, frozen, spec, options.fd_step, options.gamma_cap);
    Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
    FactorizedHessian out;
    out.diag.min_eig = es.eigenvalues().minCoeff();
    out.diag.max_eig = es.eigenvalues().maxCoeff();
    double damping;
    if (options.damping) {
        damping = *options.damping;
        require(damping >= 0.0, "damping must be non-negative");
    } else {
        damping = std::max(0.0, 1e-6 * h.trace() / static_cast<double>(h.rows()));
    }
    out.diag.damping_used = damping;
    Matrix hd = h;
    hd.diagonal().array() += damping;
    out.llt.compute(hd);
    if (out.llt.info() != Eigen::Success || out.diag.min_eig + damping <= 0.0) {
        throw SingularHessianError(
            "hessian is not positive definite after damping " +
                format_number(damping) + " (min eigenvalue " +
                format_number(out.diag.min_eig) + ")",
            out.diag.min_eig);
    }
    return out;
}

std::vector<Vector> solve_influences(const FactorizedHessian& fh,
                                     const Vector& gamma,
                                     const FrozenFeatures& frozen,
                                     LossFamily family) {
    std::vector<Vector> ifs;
    ifs.reserve(static_cast<std::size_t>(frozen.domain_count()));
    for (Index d = 0; d < frozen.domain_count(); ++d) {
        const Vector g = domain_gamma_gradient(gamma, frozen, d, family);
        ifs.push_back(-fh.llt.solve(g));
    }
    return ifs;
}

}  // namespace

std::vector<Vector> influence_vectors(const Vector& gamma,
                                      const FrozenFeatures& frozen,
                                      const ObjectiveSpec& spec,
                                      const InfluenceOptions& options,
                                      HessianDiagnostics* diagnostics) {
    const FactorizedHessian fh = factorize(gamma, frozen, spec, options);
    if (diagnostics) *diagnostics = fh.diag;
    return solve_influences(fh, gamma, frozen, spec.loss_family);
}

double covariance_top_eigenvalue(const std::vector<Vector>& if_vectors) {
    const Index m = static_cast<Index>(if_vectors.size());
    require(m >= 2, "covariance needs at least 2 influence vectors");
    const Index k = if_vectors.front().size();
    for (const auto& v : if_vectors)
        require(v.size() == k, "influence vectors differ in length");
    Vector mean = Vector::Zero(k);
    for (const auto& v : if_vectors) mean += v;
    mean /= static_cast<double>(m);
    Matrix centered(k, m);
    for (Index e = 0; e < m; ++e)
        centered.col(e) = if_vectors[static_cast<std::size_t>(e)] - mean;
    // Same nonzero spectrum as the k x k covariance, at m x m cost.
    const Matrix gram =
        (centered.transpose() * centered) / static_cast<double>(m);
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
    return std::max(0.0, es.eigenvalues().maxCoeff());
}

double v_index(const std::vector<Vector>& if_vectors) {
    const double top = covariance_top_eigenvalue(if_vectors);
    return top > 0.0 ? std::log(top) : kNegInf;
}

InfluenceReport stability_metric(const DecomposedModel& model,
                                 const MultiDomainDataset& data,
                                 const ObjectiveSpec& spec,
                                 const InfluenceOptions& options) {
    const auto t0 = std::chrono::steady_clock::now();
    const FrozenFeatures frozen = freeze(model, data);
    InfluenceReport report;
    HessianDiagnostics diag;
    report.if_vectors =
        influence_vectors(model.gamma, frozen, spec, options, &diag);
    report.covariance_top_eig = covariance_top_eigenvalue(report.if_vectors);
    report.v_index =
        report.covariance_top_eig > 0.0 ? std::log(report.covariance_top_eig)
                                        : kNegInf;
    report.hessian_min_eig = diag.min_eig;
    report.hessian_max_eig = diag.max_eig;
    report.damping_used = diag.damping_used;
    report.seconds = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
    return report;
}

ShuffleBaselineResult shuffle_baseline(const DecomposedModel& model,
                                       const MultiDomainDataset& data,
                                       const ObjectiveSpec& spec,
                                       const InfluenceOptions& options,
                                       std::uint64_t seed, Index n_repeats) {
    require(n_repeats >= 1, "shuffle baseline needs at least 1 repeat");
    const FrozenFeatures frozen = freeze(model, data);
    // Shuffling moves examples between equal pooled rows, so the pooled
    // Hessian is unchanged; factorize once and reuse across repeats.
    const FactorizedHessian fh = factorize(model.gamma, frozen, spec, options);

    const Index total = frozen.total_rows();
    ShuffleBaselineResult result;
    for (Index r = 0; r < n_repeats; ++r) {
        Rng rng(derive_seed(seed + static_cast<std::uint64_t>(r), kStreamShuffle));
        const std::vector<Index> perm = pooled_permutation(total, rng);
        Matrix pf(total, frozen.feature_width());
        Matrix pt(total, frozen.targets().cols());
        for (Index i = 0; i < total; ++i) {
            pf.row(i) = frozen.features().row(perm[static_cast<std::size_t>(i)]);
            pt.row(i) = frozen.targets().row(perm[static_cast<std::size_t>(i)]);
        }
        std::vector<std::pair<Index, Index>> spans;
        Index at = 0;
        for (Index d = 0; d < frozen.domain_count(); ++d) {
            const Index n = frozen.domain_size(d);
            spans.emplace_back(at, at + n);
            at += n;
        }
        FrozenFeatures shuffled(std::move(pf), std::move(pt), std::move(spans),
                                frozen.task());
        const std::vector<Vector> ifs =
            solve_influences(fh, model.gamma, shuffled, spec.loss_family);
        result.per_repeat.push_back(v_index(ifs));
    }
    double acc = 0.0;
    for (double v : result.per_repeat) acc += v;
    result.mean_v = acc / static_cast<double>(n_repeats);
    return result;
}

void write_influence_json(const InfluenceReport& report,
                          const std::string& path) {
    nlohmann::json j;
    if (std::isfinite(report.v_index))
        j["v_index"] = report.v_index;
    else
        j["v_index"] = "-inf";
    j["covariance_top_eig"] = report.covariance_top_eig;
    j["hessian_min_eig"] = report.hessian_min_eig;
    j["hessian_max_eig"] = report.hessian_max_eig;
    j["damping_used"] = report.damping_used;
    j["seconds"] = report.seconds;
    nlohmann::json vecs = nlohmann::json::array();
    for (const auto& v : report.if_vectors) {
        nlohmann::json arr = nlohmann::json::array();
        for (Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
        vecs.push_back(std::move(arr));
    }
    j["if_vectors"] = std::move(vecs);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open influence report for writing: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw FormatError("failed while writing influence report: " + path);
}

}  // namespace ifstab
