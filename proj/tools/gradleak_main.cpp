// gradleak CLI: label extraction, single attacks with snapshots, and
// label-accuracy / fidelity benchmarks over shared-gradient attacks.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gradleak/gradleak.hpp"

namespace {

using namespace gradleak;

std::vector<double> parse_threshold_list(const std::string& csv) {
    std::vector<double> out;
    for (const std::string& part : detail::split(csv, ',')) {
        try {
            std::size_t pos = 0;
            const double v = std::stod(part, &pos);
            if (pos != part.size()) throw std::invalid_argument(part);
            out.push_back(v);
        } catch (const std::exception&) {
            throw UsageError("bad threshold '" + part + "' in list '" + csv + "'");
        }
    }
    return out;
}

std::vector<Method> parse_method_list(const std::string& csv) {
    std::vector<Method> out;
    for (const std::string& part : detail::split(csv, ',')) {
        out.push_back(parse_method(part));
    }
    return out;
}

int cmd_extract_label(const std::string& dataset_spec, std::size_t index,
                      std::uint64_t model_seed) {
    const Dataset dataset = load_dataset(dataset_spec);
    if (index >= dataset.size()) {
        throw IndexError("index " + std::to_string(index) + " out of range for dataset of " +
                         std::to_string(dataset.size()));
    }
    Architecture arch;
    arch.in_channels = dataset.channels;
    arch.num_classes = dataset.num_classes;
    Rng rng(model_seed);
    const Model model = init_model(arch, rng);
    const GradSet shared = backward(model, dataset.images[index], dataset.labels[index]);
    const LabelPrediction pred = extract_label(shared.fc_w);
    std::cout << pred.label << "\n";
    return 0;
}

int cmd_attack(const std::string& dataset_spec, const std::string& method_str, std::size_t index,
               std::uint64_t seed, int iters, const std::string& optimizer_str, double lr,
               int snapshot_every, const std::string& out_dir) {
    const Dataset dataset = load_dataset(dataset_spec);
    const Method method = parse_method(method_str);
    const OptimizerKind optimizer = parse_optimizer(optimizer_str);

    AttackReport report = run_trial(dataset, index, method, seed, iters, optimizer, lr,
                                    default_mse_thresholds(), snapshot_every);

    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const fs::path traj_path = fs::path(out_dir) / "trajectory.csv";
    std::ofstream traj(traj_path);
    if (!traj) throw IoError("cannot write " + traj_path.string());
    traj << "iteration,loss,mse\n";
    for (std::size_t i = 0; i < report.loss_trajectory.size(); ++i) {
        traj << i << "," << detail::format_mse(report.loss_trajectory[i]) << ","
             << detail::format_mse(report.mse_trajectory[i]) << "\n";
    }

    const char* ext = dataset.channels == 1 ? ".pgm" : ".ppm";
    for (const auto& [iteration, snapshot] : report.snapshots) {
        char name[64];
        std::snprintf(name, sizeof name, "snapshot_%06d%s", iteration, ext);
        export_image(snapshot, (fs::path(out_dir) / name).string());
    }

    std::cout << "method " << method_name(method) << "\n"
              << "extracted_label " << report.extracted_label << "\n"
              << "true_label " << dataset.labels[index] << "\n"
              << "final_loss " << detail::format_mse(report.loss_trajectory.back()) << "\n"
              << "final_mse " << detail::format_mse(report.mse_trajectory.back()) << "\n"
              << "snapshots " << report.snapshots.size() << "\n"
              << "trajectory " << traj_path.string() << "\n";
    return 0;
}

int cmd_bench(BenchConfig config) {
    const BenchResult result = run_bench(config);
    for (const MethodStats& stats : result.methods) {
        std::cout << method_name(stats.method) << " label_accuracy "
                  << detail::format_fraction(stats.label_accuracy);
        for (std::size_t k = 0; k < result.thresholds.size(); ++k) {
            std::cout << " fidelity_" << detail::format_threshold(result.thresholds[k]) << " "
                      << detail::format_fraction(stats.fidelity_fraction[k]);
        }
        if (stats.aborted_trials > 0) std::cout << " aborted " << stats.aborted_trials;
        std::cout << "\n";
    }
    if (!result.summary_csv_path.empty()) {
        std::cout << "summary " << result.summary_csv_path << "\n"
                  << "trials " << result.trials_csv_path << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gradient-leakage attack toolkit"};
    app.require_subcommand(1);

    // extract-label
    auto* extract = app.add_subcommand(
        "extract-label", "analytically extract the ground-truth label from shared gradients");
    std::string ex_dataset;
    std::size_t ex_index = 0;
    std::uint64_t ex_model_seed = 0;
    extract->add_option("--dataset", ex_dataset, "dataset spec")->required();
    extract->add_option("--index", ex_index, "sample index")->required();
    extract->add_option("--model-seed", ex_model_seed, "model init seed")->required();

    // attack
    auto* attack = app.add_subcommand("attack", "reconstruct one datum from its shared gradients");
    std::string at_dataset, at_method = "idlg", at_optimizer = "lbfgs", at_out = "out";
    std::size_t at_index = 0;
    std::uint64_t at_seed = 0;
    int at_iters = 300, at_snapshot_every = 0;
    double at_lr = 1.0;
    attack->add_option("--dataset", at_dataset, "dataset spec")->required();
    attack->add_option("--method", at_method, "idlg or dlg");
    attack->add_option("--index", at_index, "sample index");
    attack->add_option("--seed", at_seed, "trial seed (model = seed, dummy = seed + 1)");
    attack->add_option("--iters", at_iters, "optimizer iterations");
    attack->add_option("--optimizer", at_optimizer, "lbfgs or gd");
    attack->add_option("--lr", at_lr, "learning rate");
    attack->add_option("--snapshot-every", at_snapshot_every, "snapshot period (0 = never)");
    attack->add_option("--out", at_out, "output directory")->required();

    // bench
    auto* bench = app.add_subcommand("bench", "label-accuracy and fidelity benchmark");
    std::string be_dataset, be_methods = "idlg,dlg", be_thresholds, be_out, be_optimizer = "lbfgs";
    int be_trials = 100, be_iters = 300, be_threads = 0;
    std::uint64_t be_seed = 0;
    double be_lr = 1.0;
    bench->add_option("--dataset", be_dataset, "dataset spec")->required();
    bench->add_option("--methods", be_methods, "comma list of idlg,dlg");
    bench->add_option("--trials", be_trials, "number of trials");
    bench->add_option("--iters", be_iters, "optimizer iterations per attack");
    bench->add_option("--seed", be_seed, "base seed");
    bench->add_option("--thresholds", be_thresholds, "comma list of decreasing MSE thresholds");
    bench->add_option("--out", be_out, "output directory")->required();
    bench->add_option("--optimizer", be_optimizer, "lbfgs or gd");
    bench->add_option("--lr", be_lr, "learning rate");
    bench->add_option("--threads", be_threads, "worker threads (0 = auto)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // help text, exit 0
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        std::cerr << app.help() << "\n";
        return 2;
    }

    try {
        if (app.got_subcommand(extract)) {
            return cmd_extract_label(ex_dataset, ex_index, ex_model_seed);
        }
        if (app.got_subcommand(attack)) {
            return cmd_attack(at_dataset, at_method, at_index, at_seed, at_iters, at_optimizer,
                              at_lr, at_snapshot_every, at_out);
        }
        if (app.got_subcommand(bench)) {
            BenchConfig config;
            config.dataset_spec = be_dataset;
            config.methods = parse_method_list(be_methods);
            config.trials = be_trials;
            config.iterations = be_iters;
            config.base_seed = be_seed;
            if (!be_thresholds.empty()) config.thresholds = parse_threshold_list(be_thresholds);
            config.out_dir = be_out;
            config.optimizer = parse_optimizer(be_optimizer);
            config.learning_rate = be_lr;
            config.threads = be_threads;
            return cmd_bench(std::move(config));
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
