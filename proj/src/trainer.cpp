#include "ifstab/trainer.hpp"

#include "ifstab/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>

namespace ifstab {

void TrainConfig::validate() const {
    require(epochs >= 1, "epochs must be >= 1");
    require(learning_rate > 0.0, "learning rate must be positive");
    if (early_stop) {
        require(early_stop->patience >= 1, "early-stop patience must be >= 1");
        require(early_stop->metric == "mean-domain-loss",
                "unknown early-stop metric: " + early_stop->metric);
    }
}

namespace {

// Backpropagate per-example output gradients through the ReLU stack.
// Returns the flat beta gradient (layer weights column-major, then biases).
Vector backprop_beta(const DecomposedModel& model, const ForwardCache& fc,
                     const Matrix& out_grad) {
    if (model.extractor == ExtractorKind::identity) return Vector(0);
    Vector grad = Vector::Zero(model.beta.size());
    const Index f = model.feature_width();
    const auto wt = head_matrix(model.gamma, f, model.output_width);
    Matrix upstream = out_grad * wt.topRows(f).transpose();  // d L / d phi

    // Layer offsets into the flat beta vector.
    std::vector<Index> offsets;
    Index at = 0, in = model.input_width;
    for (Index h : model.hidden) {
        offsets.push_back(at);
        at += in * h + h;
        in = h;
    }
    for (Index k = static_cast<Index>(model.hidden.size()) - 1; k >= 0; --k) {
        const Index h = model.hidden[static_cast<std::size_t>(k)];
        const Index in_k = k == 0 ? model.input_width
                                  : model.hidden[static_cast<std::size_t>(k - 1)];
        const Matrix& pre = fc.pre[static_cast<std::size_t>(k)];
        const Matrix& below = fc.act[static_cast<std::size_t>(k)];
        const Matrix delta =
            ((pre.array() > 0.0).cast<double>() * upstream.array()).matrix();
        const Index off = offsets[static_cast<std::size_t>(k)];
        Eigen::Map<Matrix>(grad.data() + off, in_k, h).noalias() =
            below.transpose() * delta;
        Eigen::Map<Vector>(grad.data() + off + in_k * h, h) =
            delta.colwise().sum();
        if (k > 0) {
            const auto w = Eigen::Map<const Matrix>(model.beta.data() + off,
                                                    in_k, h);
            upstream = delta * w.transpose();
        }
    }
    return grad;
}

// Pooled inputs plus the span structure freeze() would produce.
struct PooledData {
    Matrix inputs;
    Matrix targets;
    std::vector<std::pair<Index, Index>> spans;
    TaskKind task;
};

PooledData pool(const MultiDomainDataset& data) {
    PooledData p;
    p.task = data.task_kind;
    const Index total = data.total_size();
    p.inputs.resize(total, data.feature_dim());
    p.targets.resize(total, data.target_dim());
    Index at = 0;
    for (const auto& dom : data.domains) {
        p.inputs.middleRows(at, dom.size()) = dom.features;
        p.targets.middleRows(at, dom.size()) = dom.targets;
        p.spans.emplace_back(at, at + dom.size());
        at += dom.size();
    }
    return p;
}

// Deterministic 80/20 per-domain split for early stopping.
std::pair<MultiDomainDataset, MultiDomainDataset> split_for_validation(
    const MultiDomainDataset& data, std::uint64_t seed) {
    Rng rng(derive_seed(seed, kStreamSplit));
    MultiDomainDataset train, val;
    train.task_kind = val.task_kind = data.task_kind;
    for (const auto& dom : data.domains) {
        const Index n = dom.size();
        require(n >= 2, "early stopping needs at least 2 examples per domain");
        const Index n_val = std::max<Index>(1, n / 5);
        const std::vector<Index> order = rng.permutation(n);
        DomainSample tr, va;
        tr.domain_id = va.domain_id = dom.domain_id;
        tr.generator_params = va.generator_params = dom.generator_params;
        tr.features.resize(n - n_val, dom.features.cols());
        tr.targets.resize(n - n_val, dom.targets.cols());
        va.features.resize(n_val, dom.features.cols());
        va.targets.resize(n_val, dom.targets.cols());
        for (Index i = 0; i < n - n_val; ++i) {
            tr.features.row(i) = dom.features.row(order[static_cast<std::size_t>(i)]);
            tr.targets.row(i) = dom.targets.row(order[static_cast<std::size_t>(i)]);
        }
        for (Index i = 0; i < n_val; ++i) {
            const Index src = order[static_cast<std::size_t>(n - n_val + i)];
            va.features.row(i) = dom.features.row(src);
            va.targets.row(i) = dom.targets.row(src);
        }
        train.domains.push_back(std::move(tr));
        val.domains.push_back(std::move(va));
    }
    return {std::move(train), std::move(val)};
}

double mean_domain_loss(const Vector& gamma, const FrozenFeatures& frozen,
                        LossFamily family) {
    double acc = 0.0;
    for (Index d = 0; d < frozen.domain_count(); ++d)
        acc += domain_loss(gamma, frozen, d, family);
    return acc / static_cast<double>(frozen.domain_count());
}

}  // namespace

Vector beta_gradient(const DecomposedModel& model,
                     const MultiDomainDataset& data,
                     const ObjectiveSpec& objective) {
    model.validate();
    if (model.extractor == ExtractorKind::identity) return Vector(0);
    const PooledData p = pool(data);
    const ForwardCache fc = extract_with_cache(model, p.inputs);
    FrozenFeatures frozen(fc.act.back(), p.targets, p.spans, p.task);
    const Matrix g = output_gradients(model.gamma, frozen, objective);
    return backprop_beta(model, fc, g);
}

TrainResult train(const DecomposedModel& init, const MultiDomainDataset& data,
                  const ObjectiveSpec& objective, const TrainConfig& config) {
    init.validate();
    data.validate();
    objective.validate();
    config.validate();

    MultiDomainDataset train_data;
    MultiDomainDataset val_data;
    const bool early = config.early_stop.has_value();
    if (early) {
        std::tie(train_data, val_data) = split_for_validation(data, config.seed);
    } else {
        train_data = data;
    }

    DecomposedModel model = init;
    const bool update_beta = model.extractor == ExtractorKind::mlp &&
                             !config.train_gamma_only;
    const PooledData p = pool(train_data);

    // A fixed extractor means features can be computed once up front.
    std::optional<FrozenFeatures> fixed;
    if (!update_beta) fixed.emplace(freeze(model, train_data));

    TrainResult result;
    TrainingTrace& trace = result.trace;
    const Index m = train_data.domain_count();

    double best_metric = std::numeric_limits<double>::infinity();
    Vector best_gamma, best_beta;
    Index best_epoch = -1;
    Index since_best = 0;
    const Index track_from = objective.anneal ? objective.anneal->pre_epochs : 0;

    for (Index epoch = 0; epoch < config.epochs; ++epoch) {
        ObjectiveSpec eff = objective;
        eff.lambda = objective.lambda_at(epoch);
        eff.anneal.reset();

        double loss = 0.0;
        try {
            if (update_beta) {
                const ForwardCache fc = extract_with_cache(model, p.inputs);
                FrozenFeatures frozen(fc.act.back(), p.targets, p.spans, p.task);
                loss = total_loss(model.gamma, frozen, eff);
                trace.penalty.push_back(penalty_value(model.gamma, frozen, eff));
                std::vector<double> dl(static_cast<std::size_t>(m));
                for (Index d = 0; d < m; ++d)
                    dl[static_cast<std::size_t>(d)] =
                        domain_loss(model.gamma, frozen, d, eff.loss_family);
                trace.domain_losses.push_back(std::move(dl));
                const Vector ggrad = total_gamma_gradient(model.gamma, frozen, eff);
                const Matrix og = output_gradients(model.gamma, frozen, eff);
                const Vector bgrad = backprop_beta(model, fc, og);
                model.gamma -= config.learning_rate * ggrad;
                model.beta -= config.learning_rate * bgrad;
            } else {
                loss = total_loss(model.gamma, *fixed, eff);
                trace.penalty.push_back(penalty_value(model.gamma, *fixed, eff));
                std::vector<double> dl(static_cast<std::size_t>(m));
                for (Index d = 0; d < m; ++d)
                    dl[static_cast<std::size_t>(d)] =
                        domain_loss(model.gamma, *fixed, d, eff.loss_family);
                trace.domain_losses.push_back(std::move(dl));
                model.gamma -=
                    config.learning_rate * total_gamma_gradient(model.gamma, *fixed, eff);
            }
        } catch (const NumericError& err) {
            throw NumericError(std::string(err.what()) + " at epoch " +
                               std::to_string(epoch));
        }
        trace.total_loss.push_back(loss);
        if (!std::isfinite(loss))
            throw NumericError("non-finite loss at epoch " + std::to_string(epoch));

        if (early && epoch >= track_from) {
            const FrozenFeatures vfrozen = freeze(model, val_data);
            const double metric =
                mean_domain_loss(model.gamma, vfrozen, objective.loss_family);
            if (metric < best_metric) {
                best_metric = metric;
                best_gamma = model.gamma;
                best_beta = model.beta;
                best_epoch = epoch;
                since_best = 0;
            } else if (++since_best >= config.early_stop->patience) {
                break;
            }
        }
    }

    if (early && best_epoch >= 0) {
        model.gamma = best_gamma;
        model.beta = best_beta;
        trace.best_epoch = best_epoch;
    }
    result.model = std::move(model);
    return result;
}

void write_trace_csv(const TrainingTrace& trace, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open trace file for writing: " + path);
    const std::size_t m =
        trace.domain_losses.empty() ? 0 : trace.domain_losses.front().size();
    out << "epoch,total_loss,penalty";
    for (std::size_t d = 0; d < m; ++d) out << ",loss_d" << d;
    out << "\n";
    for (std::size_t e = 0; e < trace.total_loss.size(); ++e) {
        out << e << ',' << format_number(trace.total_loss[e]) << ','
            << format_number(trace.penalty[e]);
        for (std::size_t d = 0; d < m; ++d)
            out << ',' << format_number(trace.domain_losses[e][d]);
        out << "\n";
    }
    if (!out) throw FormatError("failed while writing trace file: " + path);
}

namespace {

nlohmann::json vector_to_json(const Vector& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

Vector vector_from_json(const nlohmann::json& arr) {
    Vector v(static_cast<Index>(arr.size()));
    Index i = 0;
    for (const auto& x : arr) v(i++) = x.get<double>();
    return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    ckpt.model.validate();
    nlohmann::json j;
    j["model"]["extractor"] = to_string(ckpt.model.extractor);
    j["model"]["input_width"] = ckpt.model.input_width;
    j["model"]["hidden"] = ckpt.model.hidden;
    j["model"]["output_width"] = ckpt.model.output_width;
    j["model"]["beta"] = vector_to_json(ckpt.model.beta);
    j["model"]["gamma"] = vector_to_json(ckpt.model.gamma);
    j["objective"]["loss_family"] = to_string(ckpt.objective.loss_family);
    j["objective"]["penalty"] = to_string(ckpt.objective.penalty);
    j["objective"]["lambda"] = ckpt.objective.lambda;
    if (ckpt.objective.anneal) {
        j["objective"]["anneal"]["pre_lambda"] = ckpt.objective.anneal->pre_lambda;
        j["objective"]["anneal"]["pre_epochs"] = ckpt.objective.anneal->pre_epochs;
    }
    j["seed"] = ckpt.seed;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open checkpoint for writing: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw FormatError("failed while writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& err) {
        throw FormatError("malformed checkpoint " + path + ": " + err.what());
    }
    try {
        Checkpoint c;
        c.model.extractor =
            extractor_kind_from_string(j.at("model").at("extractor").get<std::string>());
        c.model.input_width = j.at("model").at("input_width").get<Index>();
        c.model.hidden = j.at("model").at("hidden").get<std::vector<Index>>();
        c.model.output_width = j.at("model").at("output_width").get<Index>();
        c.model.beta = vector_from_json(j.at("model").at("beta"));
        c.model.gamma = vector_from_json(j.at("model").at("gamma"));
        c.objective.loss_family = loss_family_from_string(
            j.at("objective").at("loss_family").get<std::string>());
        c.objective.penalty = penalty_kind_from_string(
            j.at("objective").at("penalty").get<std::string>());
        c.objective.lambda = j.at("objective").at("lambda").get<double>();
        if (j.at("objective").contains("anneal")) {
            AnnealSchedule a;
            a.pre_lambda =
                j.at("objective").at("anneal").at("pre_lambda").get<double>();
            a.pre_epochs =
                j.at("objective").at("anneal").at("pre_epochs").get<Index>();
            c.objective.anneal = a;
        }
        c.seed = j.at("seed").get<std::uint64_t>();
        c.model.validate();
        c.objective.validate();
        return c;
    } catch (const nlohmann::json::exception& err) {
        throw FormatError("checkpoint " + path +
                          " is missing required fields: " + err.what());
    }
}

}  // namespace ifstab
