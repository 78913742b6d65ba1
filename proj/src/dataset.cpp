#include "ifstab/dataset.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace ifstab {

std::string to_string(TaskKind k) {
    return k == TaskKind::classification ? "classification" : "regression";
}

TaskKind task_kind_from_string(const std::string& s) {
    if (s == "classification") return TaskKind::classification;
    if (s == "regression") return TaskKind::regression;
    throw ParameterError("unknown task kind: " + s);
}

Index MultiDomainDataset::feature_dim() const {
    require(!domains.empty(), "dataset has no domains");
    return domains.front().features.cols();
}

Index MultiDomainDataset::target_dim() const {
    require(!domains.empty(), "dataset has no domains");
    return domains.front().targets.cols();
}

Index MultiDomainDataset::total_size() const {
    Index n = 0;
    for (const auto& d : domains) n += d.size();
    return n;
}

LabeledExample MultiDomainDataset::example(Index domain, Index row) const {
    const auto& d = domains.at(static_cast<std::size_t>(domain));
    require(row >= 0 && row < d.size(), "example row out of range");
    return {d.features.row(row).transpose(), d.targets.row(row).transpose()};
}

void MultiDomainDataset::validate() const {
    require(!domains.empty(), "dataset needs at least one domain");
    const Index d = domains.front().features.cols();
    const Index t = domains.front().targets.cols();
    std::set<std::string> ids;
    for (const auto& dom : domains) {
        require(dom.size() > 0, "domain '" + dom.domain_id + "' is empty");
        require(dom.features.cols() == d,
                "feature dimension mismatch in domain '" + dom.domain_id + "'");
        require(dom.targets.cols() == t,
                "target dimension mismatch in domain '" + dom.domain_id + "'");
        require(dom.targets.rows() == dom.features.rows(),
                "row count mismatch in domain '" + dom.domain_id + "'");
        require(ids.insert(dom.domain_id).second,
                "duplicate domain_id '" + dom.domain_id + "'");
        if (task_kind == TaskKind::classification) {
            require(t == 1, "classification targets must be one column");
            for (Index i = 0; i < dom.size(); ++i) {
                const double y = dom.targets(i, 0);
                require(y == 0.0 || y == 1.0,
                        "classification target not 0/1 in domain '" +
                            dom.domain_id + "'");
            }
        }
    }
}

std::vector<Index> pooled_permutation(Index total, Rng& rng) {
    return rng.permutation(total);
}

MultiDomainDataset shuffle_domains(const MultiDomainDataset& data,
                                   std::uint64_t seed) {
    data.validate();
    const Index total = data.total_size();
    const Index d = data.feature_dim();
    const Index t = data.target_dim();

    Matrix pooled_x(total, d), pooled_y(total, t);
    Index at = 0;
    for (const auto& dom : data.domains) {
        pooled_x.middleRows(at, dom.size()) = dom.features;
        pooled_y.middleRows(at, dom.size()) = dom.targets;
        at += dom.size();
    }

    Rng rng(derive_seed(seed, kStreamShuffle));
    const std::vector<Index> perm = pooled_permutation(total, rng);

    MultiDomainDataset out;
    out.task_kind = data.task_kind;
    Index offset = 0;
    for (const auto& dom : data.domains) {
        DomainSample nd;
        nd.domain_id = dom.domain_id;
        nd.features.resize(dom.size(), d);
        nd.targets.resize(dom.size(), t);
        for (Index i = 0; i < dom.size(); ++i) {
            const Index src = perm[static_cast<std::size_t>(offset + i)];
            nd.features.row(i) = pooled_x.row(src);
            nd.targets.row(i) = pooled_y.row(src);
        }
        offset += dom.size();
        out.domains.push_back(std::move(nd));
    }
    return out;
}

namespace {

std::string format_target_field(const Matrix& targets, Index row, TaskKind kind) {
    if (kind == TaskKind::classification)
        return targets(row, 0) == 1.0 ? "1" : "0";
    std::string s;
    for (Index c = 0; c < targets.cols(); ++c) {
        if (c > 0) s += ';';
        s += format_number(targets(row, c));
    }
    return s;
}

}  // namespace

void write_dataset_csv(const MultiDomainDataset& data, const std::string& path) {
    data.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for writing: " + path);
    out << "domain_id,target";
    for (Index c = 0; c < data.feature_dim(); ++c) out << ",f" << c;
    out << "\n";
    for (const auto& dom : data.domains) {
        for (Index i = 0; i < dom.size(); ++i) {
            out << dom.domain_id << ','
                << format_target_field(dom.targets, i, data.task_kind);
            for (Index c = 0; c < dom.features.cols(); ++c)
                out << ',' << format_number(dom.features(i, c));
            out << "\n";
        }
    }
}

void write_dataset_meta(const MultiDomainDataset& data, const std::string& path) {
    data.validate();
    nlohmann::json j;
    j["task_kind"] = to_string(data.task_kind);
    j["feature_dim"] = data.feature_dim();
    j["target_dim"] = data.target_dim();
    j["domain_count"] = data.domain_count();
    j["domains"] = nlohmann::json::array();
    for (const auto& dom : data.domains) {
        nlohmann::json dj;
        dj["domain_id"] = dom.domain_id;
        dj["size"] = dom.size();
        dj["generator_params"] = nlohmann::json::object();
        for (const auto& [k, v] : dom.generator_params)
            dj["generator_params"][k] = v;
        j["domains"].push_back(std::move(dj));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

}  // namespace ifstab
