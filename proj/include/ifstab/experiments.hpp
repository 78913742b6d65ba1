#pragma once

#include "ifstab/config.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ifstab {

// One row of runs.csv.  Unset optionals print as empty fields; v values may
// be the -inf sentinel, serialized as "-inf".
struct RunRow {
    Index run_id = 0;
    std::string algorithm;
    std::optional<double> lambda;
    std::optional<double> x;
    std::optional<double> test_acc;
    std::optional<double> ood_acc;
    double v_metric = kNegInf;
    std::optional<double> v_shuffle;
    double hessian_min_eig = 0.0;
    double damping_used = 0.0;
    double seconds = 0.0;
};

extern const char* const kRunsCsvHeader;
std::string format_run_row(const RunRow& row);

// Collects rows completed out of order and flushes the contiguous prefix, so
// partial results reach disk before an abort.
class OrderedRowSink {
public:
    OrderedRowSink(std::string path, Index expected);
    ~OrderedRowSink();
    void add(Index index, const RunRow& row);  // thread-safe
    void close();                              // flush what is contiguous
    Index flushed() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct CommandOutputs {
    std::vector<std::string> files;
};

CommandOutputs run_generate(const HarnessConfig& cfg, const std::string& out_dir);
CommandOutputs run_train(const HarnessConfig& cfg, const std::string& out_dir);
CommandOutputs run_metric(const HarnessConfig& cfg, const std::string& out_dir);
CommandOutputs run_baseline(const HarnessConfig& cfg, const std::string& out_dir);
CommandOutputs run_experiment(const HarnessConfig& cfg, const std::string& out_dir);

}  // namespace ifstab
