#include "ifstab/experiments.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON config file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", args.out_dir, "output directory")->required();
    cmd->add_option("--seed", args.seed,
                    "override every seed in the config from this value");
}

int dispatch(const std::string& name, const CommonArgs& args) {
    ifstab::HarnessConfig cfg = ifstab::parse_config_file(args.config_path);
    if (args.seed) ifstab::override_seeds(cfg, *args.seed);
    std::filesystem::create_directories(args.out_dir);
    ifstab::CommandOutputs outputs;
    if (name == "generate") {
        outputs = ifstab::run_generate(cfg, args.out_dir);
    } else if (name == "train") {
        outputs = ifstab::run_train(cfg, args.out_dir);
    } else if (name == "metric") {
        outputs = ifstab::run_metric(cfg, args.out_dir);
    } else if (name == "baseline") {
        outputs = ifstab::run_baseline(cfg, args.out_dir);
    } else {
        outputs = ifstab::run_experiment(cfg, args.out_dir);
    }
    for (const auto& f : outputs.files) std::cout << f << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Domain-stability toolkit: datasets, training, influence metrics"};
    app.require_subcommand(1);

    const char* names[] = {"generate", "train", "metric", "baseline",
                           "experiment"};
    const char* descriptions[] = {
        "synthesize a dataset and write CSV + metadata",
        "fit a model and write checkpoint + trace",
        "compute the stability index for a model",
        "compute the shuffled-domain baseline",
        "run a configured experiment end to end"};
    CommonArgs args[5];
    for (int i = 0; i < 5; ++i)
        add_common(app.add_subcommand(names[i], descriptions[i]), args[i]);

    CLI11_PARSE(app, argc, argv);

    for (int i = 0; i < 5; ++i) {
        if (app.get_subcommand(names[i])->parsed()) {
            try {
                return dispatch(names[i], args[i]);
            } catch (const std::exception& err) {
                std::cerr << "error: " << err.what() << "\n";
                return 1;
            }
        }
    }
    return 1;
}
