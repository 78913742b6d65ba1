#include "ifstab/experiments.hpp"

#include "ifstab/generators.hpp"
#include "ifstab/oracle.hpp"
#include "ifstab/rng.hpp"
#include "ifstab/stats.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

namespace ifstab {

const char* const kRunsCsvHeader =
    "run_id,algorithm,lambda,x,test_acc,ood_acc,v_metric,v_shuffle,"
    "hessian_min_eig,damping_used,seconds";

namespace {

std::string opt_field(const std::optional<double>& v) {
    return v ? format_number(*v) : std::string();
}

}  // namespace

std::string format_run_row(const RunRow& row) {
    std::string out = std::to_string(row.run_id);
    out += ',';
    out += row.algorithm;
    out += ',';
    out += opt_field(row.lambda);
    out += ',';
    out += opt_field(row.x);
    out += ',';
    out += opt_field(row.test_acc);
    out += ',';
    out += opt_field(row.ood_acc);
    out += ',';
    out += format_number(row.v_metric);
    out += ',';
    out += opt_field(row.v_shuffle);
    out += ',';
    out += format_number(row.hessian_min_eig);
    out += ',';
    out += format_number(row.damping_used);
    out += ',';
    out += format_number(row.seconds);
    return out;
}

struct OrderedRowSink::Impl {
    std::ofstream out;
    std::string path;
    std::mutex mu;
    std::map<Index, std::string> pending;
    Index next = 0;
    Index expected = 0;

    void flush_ready() {
        for (auto it = pending.begin();
             it != pending.end() && it->first == next;) {
            out << it->second << "\n";
            it = pending.erase(it);
            ++next;
        }
        out.flush();
    }
};

OrderedRowSink::OrderedRowSink(std::string path, Index expected)
    : impl_(std::make_unique<Impl>()) {
    impl_->path = std::move(path);
    impl_->expected = expected;
    impl_->out.open(impl_->path, std::ios::binary);
    if (!impl_->out)
        throw FormatError("cannot open runs file for writing: " + impl_->path);
    impl_->out << kRunsCsvHeader << "\n";
    impl_->out.flush();
}

OrderedRowSink::~OrderedRowSink() = default;

void OrderedRowSink::add(Index index, const RunRow& row) {
    std::lock_guard<std::mutex> lock(impl_->mu);
    require(index >= impl_->next && index < impl_->expected,
            "run row index out of range");
    impl_->pending.emplace(index, format_run_row(row));
    impl_->flush_ready();
}

void OrderedRowSink::close() {
    std::lock_guard<std::mutex> lock(impl_->mu);
    impl_->flush_ready();
    impl_->out.close();
}

Index OrderedRowSink::flushed() const {
    std::lock_guard<std::mutex> lock(impl_->mu);
    return impl_->next;
}

namespace {

namespace fs = std::filesystem;

std::string join_path(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for writing: " + path);
    out << text;
    if (!out) throw FormatError("failed while writing: " + path);
}

Index head_output_width(const MultiDomainDataset& data) {
    return data.task_kind == TaskKind::classification ? 1 : data.target_dim();
}

DecomposedModel initial_model(const ModelConfig& cfg,
                              const MultiDomainDataset& data) {
    if (!cfg.checkpoint.empty()) {
        Checkpoint ckpt = load_checkpoint(cfg.checkpoint);
        require(ckpt.model.input_width == data.feature_dim(),
                "checkpoint input width does not match the dataset");
        return std::move(ckpt.model);
    }
    const Index out = head_output_width(data);
    if (cfg.extractor == ExtractorKind::identity)
        return make_identity_model(data.feature_dim(), out);
    return make_mlp_model(data.feature_dim(), cfg.hidden, out, cfg.init_seed);
}

double mean_accuracy(const DecomposedModel& model,
                     const std::vector<DomainSample>& domains) {
    double acc = 0.0;
    for (const auto& d : domains) acc += domain_accuracy(model, d);
    return acc / static_cast<double>(domains.size());
}

// Everything a summary might need from one run, filled by the workers.
struct RunExtra {
    std::string algorithm;
    double lambda = 0.0;
    double x = 0.0;
    double v = kNegInf;
    std::optional<double> test_acc;
    std::optional<double> ood_acc;
    std::vector<double> baseline_repeats;
    double causal_error = 0.0;
    double noncausal_error = 0.0;
    std::pair<double, double> fitted_beta{0.0, 0.0};
    double analytic_v = kNegInf;
    std::pair<double, double> analytic_beta{0.0, 0.0};
};

// Runs jobs 0..count-1 on a small pool; first exception wins and stops the
// remaining jobs so partial rows still reach the sink.
void run_pool(Index count, Index workers,
              const std::function<void(Index)>& job) {
    Index n_workers = workers > 0
                          ? workers
                          : static_cast<Index>(std::max(
                                1u, std::thread::hardware_concurrency()));
    n_workers = std::min(n_workers, count);
    std::atomic<Index> cursor{0};
    std::atomic<bool> stop{false};
    std::mutex err_mu;
    std::exception_ptr first_error;
    auto worker = [&] {
        while (!stop.load()) {
            const Index i = cursor.fetch_add(1);
            if (i >= count) break;
            try {
                job(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!first_error) first_error = std::current_exception();
                stop.store(true);
                break;
            }
        }
    };
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (Index w = 0; w < n_workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);
}

std::string algorithm_name(PenaltyKind p) {
    return p == PenaltyKind::none ? "erm" : to_string(p);
}

double run_seconds(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
}

nlohmann::json finite_or_string(double v) {
    if (std::isfinite(v)) return v;
    return v > 0 ? "inf" : "-inf";
}

// ---- oracle_check ---------------------------------------------------------

CommandOutputs experiment_oracle_check(const HarnessConfig& cfg,
                                       const ExperimentConfig& exp,
                                       const std::string& out_dir) {
    const Index n_runs = static_cast<Index>(exp.cases.size());
    require(n_runs >= 1, "oracle_check needs at least one case");
    const std::string runs_path = join_path(out_dir, "runs.csv");
    OrderedRowSink sink(runs_path, n_runs);
    std::vector<RunExtra> extras(static_cast<std::size_t>(n_runs));

    run_pool(n_runs, exp.workers, [&](Index i) {
        const auto t0 = std::chrono::steady_clock::now();
        const std::uint64_t run_seed =
            exp.master_seed + static_cast<std::uint64_t>(i);
        const OracleCheckCase& oc = exp.cases[static_cast<std::size_t>(i)];
        MultiDomainDataset data =
            gen_two_var_sem(oc.sigma1_sq, oc.sigma2_sq, cfg.dataset.n_per_domain,
                            cfg.dataset.x1_second_moment, run_seed);
        DecomposedModel model = make_identity_model(2, 1);
        ObjectiveSpec objective;
        objective.loss_family = LossFamily::squared;
        objective.penalty = PenaltyKind::none;
        TrainConfig tc = cfg.training;
        tc.seed = run_seed;
        TrainResult fit = train(model, data, objective, tc);
        const InfluenceReport report =
            stability_metric(fit.model, data, objective, cfg.influence.options);

        const OracleCase analytic{oc.sigma1_sq, oc.sigma2_sq, 1.0};
        RunExtra& ex = extras[static_cast<std::size_t>(i)];
        ex.algorithm = "erm";
        ex.v = report.v_index;
        ex.fitted_beta = {fit.model.gamma(0), fit.model.gamma(1)};
        ex.analytic_beta = oracle_erm_beta(analytic);
        ex.analytic_v = oracle_v_erm(analytic);

        RunRow row;
        row.run_id = i;
        row.algorithm = "erm";
        row.v_metric = report.v_index;
        row.hessian_min_eig = report.hessian_min_eig;
        row.damping_used = report.damping_used;
        row.seconds = run_seconds(t0);
        sink.add(i, row);
    });
    sink.close();

    nlohmann::json cases = nlohmann::json::array();
    std::string csv =
        "case_id,sigma1_sq,sigma2_sq,analytic_beta1,analytic_beta2,"
        "fitted_beta1,fitted_beta2,analytic_v,numerical_v\n";
    for (Index i = 0; i < n_runs; ++i) {
        const auto& ex = extras[static_cast<std::size_t>(i)];
        const auto& oc = exp.cases[static_cast<std::size_t>(i)];
        nlohmann::json c;
        c["sigma1_sq"] = oc.sigma1_sq;
        c["sigma2_sq"] = oc.sigma2_sq;
        c["analytic_beta"] = {ex.analytic_beta.first, ex.analytic_beta.second};
        c["fitted_beta"] = {ex.fitted_beta.first, ex.fitted_beta.second};
        c["analytic_v"] = finite_or_string(ex.analytic_v);
        c["numerical_v"] = finite_or_string(ex.v);
        cases.push_back(std::move(c));
        csv += std::to_string(i) + ',' + format_number(oc.sigma1_sq) + ',' +
               format_number(oc.sigma2_sq) + ',' +
               format_number(ex.analytic_beta.first) + ',' +
               format_number(ex.analytic_beta.second) + ',' +
               format_number(ex.fitted_beta.first) + ',' +
               format_number(ex.fitted_beta.second) + ',' +
               format_number(ex.analytic_v) + ',' + format_number(ex.v) + "\n";
    }
    nlohmann::json summary;
    summary["kind"] = "oracle_check";
    summary["cases"] = std::move(cases);
    const std::string json_path = join_path(out_dir, "summary.json");
    const std::string csv_path = join_path(out_dir, "summary.csv");
    write_text(json_path, summary.dump(2) + "\n");
    write_text(csv_path, csv);
    return {{runs_path, json_path, csv_path}};
}

// ---- diversity_sweep ------------------------------------------------------

std::vector<double> sweep_flip_rates(double base, double x) {
    return {base - 2 * x, base - x, base, base + x, base + 2 * x};
}

CommandOutputs experiment_diversity_sweep(const HarnessConfig& cfg,
                                          const ExperimentConfig& exp,
                                          const std::string& out_dir) {
    require(exp.x_count >= 2, "diversity sweep needs at least 2 x values");
    require(exp.x_max > 0.0, "x_max must be positive");
    require(exp.base_flip - 2 * exp.x_max >= 0.0 &&
                exp.base_flip + 2 * exp.x_max <= 1.0,
            "flip probabilities leave [0,1] at x_max");
    const Index n_runs = exp.x_count;
    const std::string runs_path = join_path(out_dir, "runs.csv");
    OrderedRowSink sink(runs_path, n_runs);
    std::vector<RunExtra> extras(static_cast<std::size_t>(n_runs));

    run_pool(n_runs, exp.workers, [&](Index i) {
        const auto t0 = std::chrono::steady_clock::now();
        const std::uint64_t run_seed =
            exp.master_seed + static_cast<std::uint64_t>(i);
        const double x = exp.x_max * static_cast<double>(i) /
                         static_cast<double>(exp.x_count - 1);
        MultiDomainDataset data = gen_colored_digits(
            sweep_flip_rates(exp.base_flip, x), cfg.dataset.n_per_domain,
            cfg.dataset.label_noise, cfg.dataset.shape_dim,
            cfg.dataset.color_dim, cfg.dataset.jitter_sd, run_seed);
        DecomposedModel init;
        if (cfg.model.extractor == ExtractorKind::identity)
            init = make_identity_model(data.feature_dim(),
                                       head_output_width(data));
        else
            init = make_mlp_model(data.feature_dim(), cfg.model.hidden,
                                  head_output_width(data), run_seed);
        TrainConfig tc = cfg.training;
        tc.seed = run_seed;
        TrainResult fit = train(init, data, cfg.objective, tc);
        const InfluenceReport report =
            stability_metric(fit.model, data, cfg.objective, cfg.influence.options);
        const ShuffleBaselineResult base = shuffle_baseline(
            fit.model, data, cfg.objective, cfg.influence.options, run_seed,
            cfg.influence.shuffle_repeats);

        RunExtra& ex = extras[static_cast<std::size_t>(i)];
        ex.algorithm = algorithm_name(cfg.objective.penalty);
        ex.x = x;
        ex.v = report.v_index;
        ex.baseline_repeats = base.per_repeat;

        RunRow row;
        row.run_id = i;
        row.algorithm = ex.algorithm;
        row.x = x;
        row.v_metric = report.v_index;
        row.v_shuffle = base.mean_v;
        row.hessian_min_eig = report.hessian_min_eig;
        row.damping_used = report.damping_used;
        row.seconds = run_seconds(t0);
        sink.add(i, row);
    });
    sink.close();

    std::vector<double> xs, vs;
    for (const auto& ex : extras) {
        if (std::isfinite(ex.v)) {
            xs.push_back(ex.x);
            vs.push_back(ex.v);
        }
    }
    require(xs.size() >= 2, "too few finite V values for a correlation");
    const double r_pearson = pearson(xs, vs);
    const double r_spearman = spearman(xs, vs);

    const auto& first = extras.front();
    double b_mean = 0.0;
    for (double v : first.baseline_repeats) b_mean += v;
    b_mean /= static_cast<double>(first.baseline_repeats.size());
    double b_var = 0.0;
    for (double v : first.baseline_repeats) b_var += (v - b_mean) * (v - b_mean);
    b_var /= static_cast<double>(first.baseline_repeats.size());
    const double b_min = *std::min_element(first.baseline_repeats.begin(),
                                           first.baseline_repeats.end());
    const double b_max = *std::max_element(first.baseline_repeats.begin(),
                                           first.baseline_repeats.end());

    nlohmann::json summary;
    summary["kind"] = "diversity_sweep";
    summary["pearson_x_v"] = r_pearson;
    summary["spearman_x_v"] = r_spearman;
    summary["finite_rows"] = xs.size();
    summary["x0_v"] = finite_or_string(first.v);
    summary["x0_baseline_mean"] = finite_or_string(b_mean);
    summary["x0_baseline_sd"] = std::sqrt(b_var);
    summary["x0_baseline_min"] = finite_or_string(b_min);
    summary["x0_baseline_max"] = finite_or_string(b_max);
    std::string csv = "stat,value\n";
    csv += "pearson_x_v," + format_number(r_pearson) + "\n";
    csv += "spearman_x_v," + format_number(r_spearman) + "\n";
    csv += "finite_rows," + std::to_string(xs.size()) + "\n";
    csv += "x0_v," + format_number(first.v) + "\n";
    csv += "x0_baseline_mean," + format_number(b_mean) + "\n";
    csv += "x0_baseline_sd," + format_number(std::sqrt(b_var)) + "\n";
    csv += "x0_baseline_min," + format_number(b_min) + "\n";
    csv += "x0_baseline_max," + format_number(b_max) + "\n";

    const std::string json_path = join_path(out_dir, "summary.json");
    const std::string csv_path = join_path(out_dir, "summary.csv");
    write_text(json_path, summary.dump(2) + "\n");
    write_text(csv_path, csv);
    return {{runs_path, json_path, csv_path}};
}

// ---- lambda_grid ----------------------------------------------------------

CommandOutputs experiment_lambda_grid(const HarnessConfig& cfg,
                                      const ExperimentConfig& exp,
                                      const std::string& out_dir) {
    require(!exp.lambdas.empty(), "lambda grid is empty");
    require(!exp.algorithms.empty(), "algorithm list is empty");
    require(exp.models_per_lambda >= 1, "models_per_lambda must be >= 1");
    for (PenaltyKind p : exp.algorithms)
        require(p != PenaltyKind::none, "lambda grid expects penalized algorithms");

    struct Job {
        PenaltyKind algorithm;
        double lambda;
    };
    std::vector<Job> jobs;
    for (PenaltyKind p : exp.algorithms)
        for (double l : exp.lambdas)
            for (Index k = 0; k < exp.models_per_lambda; ++k)
                jobs.push_back({p, l});
    const Index n_runs = static_cast<Index>(jobs.size());
    const std::string runs_path = join_path(out_dir, "runs.csv");
    OrderedRowSink sink(runs_path, n_runs);
    std::vector<RunExtra> extras(static_cast<std::size_t>(n_runs));

    run_pool(n_runs, exp.workers, [&](Index i) {
        const auto t0 = std::chrono::steady_clock::now();
        const std::uint64_t run_seed =
            exp.master_seed + static_cast<std::uint64_t>(i);
        const Job& job = jobs[static_cast<std::size_t>(i)];
        MultiDomainDataset data = gen_colored_digits(
            cfg.dataset.flip_rates, cfg.dataset.n_per_domain,
            cfg.dataset.label_noise, cfg.dataset.shape_dim,
            cfg.dataset.color_dim, cfg.dataset.jitter_sd, run_seed);

        DecomposedModel init;
        if (cfg.model.extractor == ExtractorKind::identity)
            init = make_identity_model(data.feature_dim(), 1);
        else
            init = make_mlp_model(data.feature_dim(), cfg.model.hidden, 1,
                                  run_seed);
        ObjectiveSpec objective = cfg.objective;
        objective.penalty = job.algorithm;
        objective.lambda = job.lambda;
        TrainConfig tc = cfg.training;
        tc.seed = run_seed;
        TrainResult fit = train(init, data, objective, tc);

        MultiDomainDataset test_data = gen_colored_digits(
            cfg.dataset.flip_rates, exp.n_eval_per_domain,
            cfg.dataset.label_noise, cfg.dataset.shape_dim,
            cfg.dataset.color_dim, cfg.dataset.jitter_sd,
            derive_seed(run_seed, kStreamEval));
        MultiDomainDataset ood_data = gen_colored_digits(
            exp.ood_grid, exp.n_eval_per_domain, cfg.dataset.label_noise,
            cfg.dataset.shape_dim, cfg.dataset.color_dim, cfg.dataset.jitter_sd,
            derive_seed(run_seed, kStreamOod));

        const InfluenceReport report =
            stability_metric(fit.model, data, objective, cfg.influence.options);

        RunExtra& ex = extras[static_cast<std::size_t>(i)];
        ex.algorithm = algorithm_name(job.algorithm);
        ex.lambda = job.lambda;
        ex.v = report.v_index;
        ex.test_acc = mean_accuracy(fit.model, test_data.domains);
        ex.ood_acc = worst_domain_accuracy(fit.model, ood_data.domains).worst;

        RunRow row;
        row.run_id = i;
        row.algorithm = ex.algorithm;
        row.lambda = job.lambda;
        row.test_acc = ex.test_acc;
        row.ood_acc = ex.ood_acc;
        row.v_metric = report.v_index;
        row.hessian_min_eig = report.hessian_min_eig;
        row.damping_used = report.damping_used;
        row.seconds = run_seconds(t0);
        sink.add(i, row);
    });
    sink.close();

    nlohmann::json by_algorithm = nlohmann::json::object();
    std::string csv = "algorithm,kept,pearson_v_ood,spearman_v_ood\n";
    for (PenaltyKind p : exp.algorithms) {
        const std::string name = algorithm_name(p);
        std::vector<double> vs, oods;
        Index kept = 0;
        for (const auto& ex : extras) {
            if (ex.algorithm != name) continue;
            if (!ex.test_acc || !ex.ood_acc || !std::isfinite(ex.v)) continue;
            if (std::abs(*ex.test_acc - exp.acc_filter_center) >
                exp.acc_filter_width)
                continue;
            vs.push_back(ex.v);
            oods.push_back(*ex.ood_acc);
            ++kept;
        }
        nlohmann::json entry;
        entry["kept"] = kept;
        if (kept >= 2) {
            const double rp = pearson(vs, oods);
            const double rs = spearman(vs, oods);
            entry["pearson_v_ood"] = rp;
            entry["spearman_v_ood"] = rs;
            csv += name + ',' + std::to_string(kept) + ',' + format_number(rp) +
                   ',' + format_number(rs) + "\n";
        } else {
            csv += name + ',' + std::to_string(kept) + ",,\n";
        }
        by_algorithm[name] = std::move(entry);
    }
    nlohmann::json summary;
    summary["kind"] = "lambda_grid";
    summary["algorithms"] = std::move(by_algorithm);
    const std::string json_path = join_path(out_dir, "summary.json");
    const std::string csv_path = join_path(out_dir, "summary.csv");
    write_text(json_path, summary.dump(2) + "\n");
    write_text(csv_path, csv);
    return {{runs_path, json_path, csv_path}};
}

// ---- bayes_table ----------------------------------------------------------

CommandOutputs experiment_bayes_table(const HarnessConfig& cfg,
                                      const ExperimentConfig& exp,
                                      const std::string& out_dir) {
    require(exp.repetitions >= 1, "bayes table needs at least 1 repetition");
    const std::vector<PenaltyKind> algs = {PenaltyKind::none, PenaltyKind::irm,
                                           PenaltyKind::vrex};
    const Index n_runs = exp.repetitions * static_cast<Index>(algs.size());
    const std::string runs_path = join_path(out_dir, "runs.csv");
    OrderedRowSink sink(runs_path, n_runs);
    std::vector<RunExtra> extras(static_cast<std::size_t>(n_runs));

    Matrix w_a, w_b;
    if (cfg.dataset.w_a && cfg.dataset.w_b) {
        w_a = *cfg.dataset.w_a;
        w_b = *cfg.dataset.w_b;
    } else {
        std::tie(w_a, w_b) = default_bayes_weights(cfg.dataset.block_dim);
    }
    const Index block = w_a.rows();

    run_pool(n_runs, exp.workers, [&](Index i) {
        const auto t0 = std::chrono::steady_clock::now();
        const Index rep = i / static_cast<Index>(algs.size());
        const PenaltyKind alg =
            algs[static_cast<std::size_t>(i % static_cast<Index>(algs.size()))];
        // All three algorithms inside one repetition share the dataset seed.
        const std::uint64_t run_seed =
            exp.master_seed + static_cast<std::uint64_t>(rep);
        MultiDomainDataset data = gen_bayes_net(
            cfg.dataset.sigmas, cfg.dataset.n_per_domain, w_a, w_b, run_seed);

        DecomposedModel init =
            make_identity_model(data.feature_dim(), data.target_dim());
        ObjectiveSpec objective = cfg.objective;
        objective.loss_family = LossFamily::squared;
        objective.penalty = alg;
        objective.lambda = alg == PenaltyKind::none ? 0.0
                           : alg == PenaltyKind::irm ? exp.lambda_irm
                                                     : exp.lambda_vrex;
        TrainConfig tc = cfg.training;
        tc.seed = run_seed;
        TrainResult fit = train(init, data, objective, tc);
        const InfluenceReport report =
            stability_metric(fit.model, data, objective, cfg.influence.options);

        const auto head = head_matrix(fit.model.gamma, data.feature_dim(),
                                      data.target_dim());
        const Matrix w1 = head.topRows(block);
        const Matrix w2 = head.middleRows(block, block);

        RunExtra& ex = extras[static_cast<std::size_t>(i)];
        ex.algorithm = algorithm_name(alg);
        ex.lambda = objective.lambda;
        ex.v = report.v_index;
        ex.causal_error = (w1 - w_a).squaredNorm();
        ex.noncausal_error = w2.squaredNorm();

        RunRow row;
        row.run_id = i;
        row.algorithm = ex.algorithm;
        row.lambda = objective.lambda;
        row.v_metric = report.v_index;
        row.hessian_min_eig = report.hessian_min_eig;
        row.damping_used = report.damping_used;
        row.seconds = run_seconds(t0);
        sink.add(i, row);
    });
    sink.close();

    nlohmann::json by_algorithm = nlohmann::json::object();
    std::string csv = "algorithm,mean_v,mean_causal_error,mean_noncausal_error\n";
    for (PenaltyKind p : algs) {
        const std::string name = algorithm_name(p);
        double sum_v = 0.0, sum_c = 0.0, sum_n = 0.0;
        Index count = 0;
        std::vector<double> vs, cs, ns;
        for (const auto& ex : extras) {
            if (ex.algorithm != name) continue;
            sum_v += ex.v;
            sum_c += ex.causal_error;
            sum_n += ex.noncausal_error;
            vs.push_back(ex.v);
            cs.push_back(ex.causal_error);
            ns.push_back(ex.noncausal_error);
            ++count;
        }
        const double mean_v = sum_v / static_cast<double>(count);
        const double mean_c = sum_c / static_cast<double>(count);
        const double mean_n = sum_n / static_cast<double>(count);
        nlohmann::json entry;
        entry["mean_v"] = finite_or_string(mean_v);
        entry["mean_causal_error"] = mean_c;
        entry["mean_noncausal_error"] = mean_n;
        entry["v"] = vs;
        entry["causal_error"] = cs;
        entry["noncausal_error"] = ns;
        by_algorithm[name] = std::move(entry);
        csv += name + ',' + format_number(mean_v) + ',' + format_number(mean_c) +
               ',' + format_number(mean_n) + "\n";
    }
    nlohmann::json summary;
    summary["kind"] = "bayes_table";
    summary["algorithms"] = std::move(by_algorithm);
    const std::string json_path = join_path(out_dir, "summary.json");
    const std::string csv_path = join_path(out_dir, "summary.csv");
    write_text(json_path, summary.dump(2) + "\n");
    write_text(csv_path, csv);
    return {{runs_path, json_path, csv_path}};
}

}  // namespace

// ---- plain subcommands ----------------------------------------------------

CommandOutputs run_generate(const HarnessConfig& cfg, const std::string& out_dir) {
    const MultiDomainDataset data = build_dataset(cfg.dataset);
    const std::string csv_path = join_path(out_dir, "dataset.csv");
    const std::string meta_path = join_path(out_dir, "dataset_meta.json");
    write_dataset_csv(data, csv_path);
    write_dataset_meta(data, meta_path);
    return {{csv_path, meta_path}};
}

CommandOutputs run_train(const HarnessConfig& cfg, const std::string& out_dir) {
    const MultiDomainDataset data = build_dataset(cfg.dataset);
    const DecomposedModel init = initial_model(cfg.model, data);
    const TrainResult result = train(init, data, cfg.objective, cfg.training);
    const std::string ckpt_path = join_path(out_dir, "checkpoint.json");
    const std::string trace_path = join_path(out_dir, "trace.csv");
    save_checkpoint({result.model, cfg.objective, cfg.training.seed}, ckpt_path);
    write_trace_csv(result.trace, trace_path);
    return {{ckpt_path, trace_path}};
}

namespace {

DecomposedModel trained_model(const HarnessConfig& cfg,
                              const MultiDomainDataset& data) {
    if (!cfg.model.checkpoint.empty()) return initial_model(cfg.model, data);
    return train(initial_model(cfg.model, data), data, cfg.objective,
                 cfg.training)
        .model;
}

}  // namespace

CommandOutputs run_metric(const HarnessConfig& cfg, const std::string& out_dir) {
    const MultiDomainDataset data = build_dataset(cfg.dataset);
    const DecomposedModel model = trained_model(cfg, data);
    const InfluenceReport report =
        stability_metric(model, data, cfg.objective, cfg.influence.options);
    const std::string path = join_path(out_dir, "influence.json");
    write_influence_json(report, path);
    return {{path}};
}

CommandOutputs run_baseline(const HarnessConfig& cfg, const std::string& out_dir) {
    const MultiDomainDataset data = build_dataset(cfg.dataset);
    const DecomposedModel model = trained_model(cfg, data);
    ShuffleBaselineResult result;
    if (cfg.influence.retrain_on_shuffle) {
        for (Index r = 0; r < cfg.influence.shuffle_repeats; ++r) {
            const MultiDomainDataset shuffled = shuffle_domains(
                data, cfg.influence.shuffle_seed + static_cast<std::uint64_t>(r));
            const DecomposedModel refit =
                train(initial_model(cfg.model, shuffled), shuffled,
                      cfg.objective, cfg.training)
                    .model;
            result.per_repeat.push_back(
                stability_metric(refit, shuffled, cfg.objective,
                                 cfg.influence.options)
                    .v_index);
        }
        double acc = 0.0;
        for (double v : result.per_repeat) acc += v;
        result.mean_v = acc / static_cast<double>(result.per_repeat.size());
    } else {
        result = shuffle_baseline(model, data, cfg.objective,
                                  cfg.influence.options,
                                  cfg.influence.shuffle_seed,
                                  cfg.influence.shuffle_repeats);
    }
    nlohmann::json j;
    j["mean_v"] = finite_or_string(result.mean_v);
    nlohmann::json arr = nlohmann::json::array();
    for (double v : result.per_repeat) arr.push_back(finite_or_string(v));
    j["per_repeat"] = std::move(arr);
    j["retrain_on_shuffle"] = cfg.influence.retrain_on_shuffle;
    const std::string path = join_path(out_dir, "baseline.json");
    write_text(path, j.dump(2) + "\n");
    return {{path}};
}

CommandOutputs run_experiment(const HarnessConfig& cfg, const std::string& out_dir) {
    require(cfg.experiment.has_value(),
            "experiment command needs an experiment config section");
    const ExperimentConfig& exp = *cfg.experiment;
    switch (exp.kind) {
        case ExperimentKind::oracle_check:
            return experiment_oracle_check(cfg, exp, out_dir);
        case ExperimentKind::diversity_sweep:
            return experiment_diversity_sweep(cfg, exp, out_dir);
        case ExperimentKind::lambda_grid:
            return experiment_lambda_grid(cfg, exp, out_dir);
        default:
            return experiment_bayes_table(cfg, exp, out_dir);
    }
}

}  // namespace ifstab
