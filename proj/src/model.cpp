#include "ifstab/model.hpp"

#include "ifstab/rng.hpp"

#include <cmath>

namespace ifstab {

std::string to_string(ExtractorKind k) {
    return k == ExtractorKind::identity ? "identity" : "mlp";
}

ExtractorKind extractor_kind_from_string(const std::string& s) {
    if (s == "identity") return ExtractorKind::identity;
    if (s == "mlp") return ExtractorKind::mlp;
    throw ParameterError("unknown extractor kind: " + s);
}

FrozenFeatures::FrozenFeatures(Matrix features, Matrix targets,
                               std::vector<std::pair<Index, Index>> spans,
                               TaskKind task)
    : features_(std::move(features)),
      targets_(std::move(targets)),
      spans_(std::move(spans)),
      task_(task) {
    require(features_.rows() == targets_.rows(), "feature/target row mismatch");
    Index expect = 0;
    for (const auto& [b, e] : spans_) {
        require(b == expect && e > b, "spans must partition the rows in order");
        expect = e;
    }
    require(expect == features_.rows(), "spans do not cover all rows");
}

std::pair<Index, Index> FrozenFeatures::span(Index domain) const {
    require(domain >= 0 && domain < domain_count(), "domain index out of range");
    return spans_[static_cast<std::size_t>(domain)];
}

Index FrozenFeatures::domain_size(Index domain) const {
    const auto [b, e] = span(domain);
    return e - b;
}

const QuadStats& FrozenFeatures::quad_stats() const {
    std::call_once(stats_->once, [this] {
        auto st = std::make_unique<QuadStats>();
        const Index f = feature_width();
        const Index m = domain_count();
        st->a_mean = Matrix::Zero(f + 1, f + 1);
        for (Index d = 0; d < m; ++d) {
            const auto [b, e] = spans_[static_cast<std::size_t>(d)];
            const Index n = e - b;
            const auto phi = features_.middleRows(b, n);
            const auto y = targets_.middleRows(b, n);
            Matrix a(f + 1, f + 1);
            a.topLeftCorner(f, f).noalias() = phi.transpose() * phi;
            a.topRightCorner(f, 1) = phi.colwise().sum().transpose();
            a.bottomLeftCorner(1, f) = a.topRightCorner(f, 1).transpose();
            a(f, f) = static_cast<double>(n);
            a /= static_cast<double>(n);
            Matrix bb(f + 1, targets_.cols());
            bb.topRows(f).noalias() = phi.transpose() * y;
            bb.bottomRows(1) = y.colwise().sum();
            bb /= static_cast<double>(n);
            st->a.push_back(std::move(a));
            st->b.push_back(std::move(bb));
            st->c.push_back(y.squaredNorm() / static_cast<double>(n));
            st->a_mean += st->a.back();
        }
        st->a_mean /= static_cast<double>(m);
        stats_->value = std::move(st);
    });
    return *stats_->value;
}

namespace {

Index beta_length(Index input, const std::vector<Index>& hidden) {
    Index len = 0, in = input;
    for (Index h : hidden) {
        len += in * h + h;
        in = h;
    }
    return len;
}

}  // namespace

void DecomposedModel::validate() const {
    require(input_width >= 1 && output_width >= 1, "model widths must be >= 1");
    for (Index h : hidden) require(h >= 1, "hidden widths must be >= 1");
    if (extractor == ExtractorKind::identity) {
        require(hidden.empty(), "identity extractor takes no hidden layers");
        require(beta.size() == 0, "identity extractor carries no beta");
    } else {
        require(!hidden.empty(), "mlp extractor needs hidden layers");
        require(beta.size() == beta_length(input_width, hidden),
                "beta length does not match layer sizes");
    }
    require(gamma.size() == gamma_length(),
            "gamma length does not match head shape");
}

DecomposedModel make_identity_model(Index input_width, Index output_width) {
    DecomposedModel m;
    m.extractor = ExtractorKind::identity;
    m.input_width = input_width;
    m.output_width = output_width;
    m.gamma = Vector::Zero(m.gamma_length());
    m.validate();
    return m;
}

DecomposedModel make_mlp_model(Index input_width, std::vector<Index> hidden,
                               Index output_width, std::uint64_t seed) {
    DecomposedModel m;
    m.extractor = ExtractorKind::mlp;
    m.input_width = input_width;
    m.hidden = std::move(hidden);
    m.output_width = output_width;
    require(!m.hidden.empty(), "mlp extractor needs hidden layers");

    Rng rng(derive_seed(seed, kStreamInit));
    m.beta = Vector::Zero(beta_length(input_width, m.hidden));
    Index at = 0, in = input_width;
    for (Index h : m.hidden) {
        const double bound = std::sqrt(6.0 / double(in + h));
        for (Index j = 0; j < in * h; ++j)
            m.beta(at + j) = rng.uniform(-bound, bound);
        at += in * h + h;  // biases stay zero
        in = h;
    }
    m.gamma = Vector::Zero(m.gamma_length());
    const Index f = m.feature_width();
    const double bound = std::sqrt(6.0 / double(f + output_width));
    // Head weights occupy the first f rows of each column; bias row stays 0.
    for (Index c = 0; c < output_width; ++c)
        for (Index r = 0; r < f; ++r)
            m.gamma(c * (f + 1) + r) = rng.uniform(-bound, bound);
    m.validate();
    return m;
}

namespace {

// Views of one layer inside the flat beta vector.
struct LayerView {
    Eigen::Map<const Matrix> w;
    Eigen::Map<const Vector> b;
};

LayerView layer_view(const Vector& beta, Index offset, Index in, Index out) {
    return {Eigen::Map<const Matrix>(beta.data() + offset, in, out),
            Eigen::Map<const Vector>(beta.data() + offset + in * out, out)};
}

}  // namespace

ForwardCache extract_with_cache(const DecomposedModel& model,
                                const Matrix& inputs) {
    require(inputs.cols() == model.input_width,
            "input width does not match extractor");
    ForwardCache fc;
    fc.act.push_back(inputs);
    if (model.extractor == ExtractorKind::identity) return fc;
    Index offset = 0, in = model.input_width;
    for (Index h : model.hidden) {
        const LayerView lv = layer_view(model.beta, offset, in, h);
        Matrix pre = (fc.act.back() * lv.w).rowwise() + lv.b.transpose();
        fc.act.push_back(pre.cwiseMax(0.0));
        fc.pre.push_back(std::move(pre));
        offset += in * h + h;
        in = h;
    }
    return fc;
}

Matrix extract(const DecomposedModel& model, const Matrix& inputs) {
    if (model.extractor == ExtractorKind::identity) {
        require(inputs.cols() == model.input_width,
                "input width does not match extractor");
        return inputs;
    }
    return extract_with_cache(model, inputs).act.back();
}

Eigen::Map<const Matrix> head_matrix(const Vector& gamma, Index feature_width,
                                     Index output_width) {
    require(gamma.size() == (feature_width + 1) * output_width,
            "gamma length does not match head shape");
    return {gamma.data(), feature_width + 1, output_width};
}

Matrix head_forward(const Vector& gamma, const Matrix& phi, Index output_width) {
    const Index f = phi.cols();
    const auto wt = head_matrix(gamma, f, output_width);
    return (phi * wt.topRows(f)).rowwise() + wt.row(f);
}

Matrix forward(const DecomposedModel& model, const Matrix& inputs) {
    model.validate();
    return head_forward(model.gamma, extract(model, inputs), model.output_width);
}

FrozenFeatures freeze(const DecomposedModel& model,
                      const MultiDomainDataset& data) {
    model.validate();
    data.validate();
    require(data.feature_dim() == model.input_width,
            "dataset width does not match extractor input");
    const Index total = data.total_size();
    Matrix features(total, model.feature_width());
    Matrix targets(total, data.target_dim());
    std::vector<std::pair<Index, Index>> spans;
    Index at = 0;
    for (const auto& dom : data.domains) {
        features.middleRows(at, dom.size()) = extract(model, dom.features);
        targets.middleRows(at, dom.size()) = dom.targets;
        spans.emplace_back(at, at + dom.size());
        at += dom.size();
    }
    return {std::move(features), std::move(targets), std::move(spans),
            data.task_kind};
}

}  // namespace ifstab
