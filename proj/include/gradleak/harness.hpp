#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "gradleak/attack.hpp"
#include "gradleak/data.hpp"
#include "gradleak/errors.hpp"
#include "gradleak/model.hpp"

namespace gradleak {

// ---- dataset specs ----
// mnist:<images>,<labels> | cifar100:<bin> | dir:<root> | synthetic:<count>,<channels>,<classes>

struct DatasetSpec {
    enum class Kind { mnist, cifar100, dir, synthetic };
    Kind kind = Kind::synthetic;
    std::string images_path, labels_path;  // mnist
    std::string path;                      // cifar100 bin or dir root
    std::size_t count = 0, channels = 0, classes = 0;  // synthetic
    std::string raw;
};

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const std::size_t p = s.find(sep, start);
        if (p == std::string::npos) {
            parts.push_back(s.substr(start));
            break;
        }
        parts.push_back(s.substr(start, p - start));
        start = p + 1;
    }
    return parts;
}

inline std::size_t parse_positive(const std::string& s, const char* what) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(s, &pos);
        if (pos != s.size() || v <= 0) throw std::invalid_argument(s);
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw UsageError(std::string("bad ") + what + ": '" + s + "'");
    }
}

/// Resolve a data file against GRADLEAK_DATA_DIR when it does not exist as given.
inline std::string resolve_data_path(const std::string& path) {
    namespace fs = std::filesystem;
    if (fs::exists(path)) return path;
    if (const char* base = std::getenv("GRADLEAK_DATA_DIR")) {
        const fs::path joined = fs::path(base) / path;
        if (fs::exists(joined)) return joined.string();
    }
    return path;
}

}  // namespace detail

inline DatasetSpec parse_dataset_spec(const std::string& spec) {
    DatasetSpec out;
    out.raw = spec;
    const std::size_t colon = spec.find(':');
    if (colon == std::string::npos) {
        throw UsageError("bad dataset spec '" + spec +
                         "' (expected mnist:..., cifar100:..., dir:... or synthetic:...)");
    }
    const std::string kind = spec.substr(0, colon);
    const std::string rest = spec.substr(colon + 1);
    if (kind == "mnist") {
        const auto parts = detail::split(rest, ',');
        if (parts.size() != 2 || parts[0].empty() || parts[1].empty()) {
            throw UsageError("bad mnist spec '" + spec + "' (expected mnist:<images>,<labels>)");
        }
        out.kind = DatasetSpec::Kind::mnist;
        out.images_path = parts[0];
        out.labels_path = parts[1];
    } else if (kind == "cifar100") {
        if (rest.empty()) throw UsageError("bad cifar100 spec '" + spec + "'");
        out.kind = DatasetSpec::Kind::cifar100;
        out.path = rest;
    } else if (kind == "dir") {
        if (rest.empty()) throw UsageError("bad dir spec '" + spec + "'");
        out.kind = DatasetSpec::Kind::dir;
        out.path = rest;
    } else if (kind == "synthetic") {
        const auto parts = detail::split(rest, ',');
        if (parts.size() != 3) {
            throw UsageError("bad synthetic spec '" + spec +
                             "' (expected synthetic:<count>,<channels>,<classes>)");
        }
        out.kind = DatasetSpec::Kind::synthetic;
        out.count = detail::parse_positive(parts[0], "synthetic count");
        out.channels = detail::parse_positive(parts[1], "synthetic channels");
        out.classes = detail::parse_positive(parts[2], "synthetic classes");
    } else {
        throw UsageError("unknown dataset kind '" + kind + "' in spec '" + spec + "'");
    }
    return out;
}

/// Synthetic image content is seeded independently of trial seeds so that a
/// given spec always names the same dataset.
inline constexpr std::uint64_t kSyntheticDataSeed = 0x5eed'da7a;

inline Dataset load_dataset(const DatasetSpec& spec) {
    switch (spec.kind) {
        case DatasetSpec::Kind::mnist:
            return load_mnist(detail::resolve_data_path(spec.images_path),
                              detail::resolve_data_path(spec.labels_path));
        case DatasetSpec::Kind::cifar100:
            return load_cifar100(detail::resolve_data_path(spec.path));
        case DatasetSpec::Kind::dir:
            return load_image_dir(detail::resolve_data_path(spec.path));
        case DatasetSpec::Kind::synthetic: {
            Rng rng(kSyntheticDataSeed);
            return synthetic_dataset(rng, spec.count, spec.channels, spec.classes);
        }
    }
    throw UsageError("unreachable dataset kind");
}

inline Dataset load_dataset(const std::string& spec) {
    return load_dataset(parse_dataset_spec(spec));
}

// ---- trials ----

/// One attack trial: fresh model from trial_seed, honest shared gradients from
/// the chosen sample, dummy init from trial_seed + 1.
inline AttackReport run_trial(const Dataset& dataset, std::size_t sample_index, Method method,
                              std::uint64_t trial_seed, int iterations,
                              OptimizerKind optimizer = OptimizerKind::lbfgs,
                              double learning_rate = 1.0,
                              const std::vector<double>& thresholds = default_mse_thresholds(),
                              int snapshot_every = 0) {
    if (sample_index >= dataset.size()) {
        throw IndexError("sample index " + std::to_string(sample_index) +
                         " out of range for dataset of " + std::to_string(dataset.size()));
    }
    Architecture arch;
    arch.in_channels = dataset.channels;
    arch.num_classes = dataset.num_classes;
    Rng model_rng(trial_seed);
    Model model = init_model(arch, model_rng);

    const Tensor& x_true = dataset.images[sample_index];
    const std::size_t c_true = dataset.labels[sample_index];
    GradSet shared = backward(model, x_true, c_true);

    AttackConfig config;
    config.method = method;
    config.iterations = iterations;
    config.optimizer = optimizer;
    config.learning_rate = learning_rate;
    config.seed = trial_seed + 1;
    config.snapshot_every = snapshot_every;
    config.mse_thresholds = thresholds;

    return method == Method::idlg ? run_idlg(model, shared, config, &x_true)
                                  : run_dlg(model, shared, config, &x_true);
}

// ---- benchmark driver ----

struct BenchConfig {
    std::string dataset_spec;
    std::vector<Method> methods = {Method::idlg, Method::dlg};
    int trials = 100;
    int iterations = 300;
    std::uint64_t base_seed = 0;
    std::vector<double> thresholds = default_mse_thresholds();
    std::string out_dir;
    OptimizerKind optimizer = OptimizerKind::lbfgs;
    double learning_rate = 1.0;
    int threads = 0;  // 0 = hardware concurrency

    void validate() const {
        if (trials < 1) throw UsageError("bench trials must be at least 1");
        if (iterations < 0) throw UsageError("bench iterations must be non-negative");
        if (methods.empty()) throw UsageError("bench needs at least one method");
        if (thresholds.empty()) throw UsageError("bench needs at least one threshold");
        for (std::size_t i = 0; i < thresholds.size(); ++i) {
            if (!(thresholds[i] > 0.0)) throw UsageError("thresholds must be positive");
            if (i > 0 && !(thresholds[i] < thresholds[i - 1])) {
                throw UsageError("thresholds must be strictly decreasing");
            }
        }
    }
};

struct TrialRow {
    int trial = 0;
    std::uint64_t seed = 0;
    Method method = Method::idlg;
    long long extracted_label = -1;
    long long true_label = -1;
    double final_mse = -1.0;  // -1 marks an aborted trial
    double min_mse = -1.0;
    std::vector<int> iters_to;  // aligned with thresholds; -1 if unreached
    bool aborted = false;
    bool label_correct = false;
};

struct MethodStats {
    Method method = Method::idlg;
    double label_accuracy = 0.0;
    std::vector<double> fidelity_fraction;  // fraction of trials with final MSE < threshold
    double mean_final_mse = -1.0;           // over non-aborted trials
    std::vector<double> mean_iters_to;      // over trials that reached; -1 if none
    int aborted_trials = 0;
};

struct BenchResult {
    std::string dataset_name;
    int trials = 0;
    std::vector<double> thresholds;
    std::vector<MethodStats> methods;
    std::vector<TrialRow> rows;  // ordered by trial, then method in config order
    std::string summary_csv_path;
    std::string trials_csv_path;
};

namespace detail {

inline std::string format_threshold(double t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.0e", t);
    return buf;
}

inline std::string format_fraction(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

inline std::string format_mse(double v) {
    if (v < 0.0) return "-1";
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.9e", v);
    return buf;
}

inline TrialRow bench_one(const Dataset& dataset, const BenchConfig& config, int trial,
                          Method method) {
    TrialRow row;
    row.trial = trial;
    row.seed = config.base_seed + static_cast<std::uint64_t>(trial);
    row.method = method;
    const std::size_t sample = static_cast<std::size_t>(trial) % dataset.size();
    row.true_label = static_cast<long long>(dataset.labels[sample]);
    row.iters_to.assign(config.thresholds.size(), -1);
    try {
        AttackReport report =
            run_trial(dataset, sample, method, row.seed, config.iterations, config.optimizer,
                      config.learning_rate, config.thresholds);
        row.extracted_label = static_cast<long long>(report.extracted_label);
        row.label_correct = row.extracted_label == row.true_label;
        row.final_mse = report.mse_trajectory.back();
        row.min_mse = *std::min_element(report.mse_trajectory.begin(),
                                        report.mse_trajectory.end());
        for (std::size_t k = 0; k < config.thresholds.size(); ++k) {
            const auto it = report.iterations_to_threshold.find(config.thresholds[k]);
            if (it != report.iterations_to_threshold.end()) row.iters_to[k] = it->second;
        }
    } catch (const Error&) {
        // Aborted trials count as label-wrong and fidelity-failed.
        row.aborted = true;
    }
    return row;
}

}  // namespace detail

/// Runs trials x methods attacks (seeds base_seed .. base_seed + trials - 1,
/// cycling sample indices), aggregates label accuracy and per-threshold
/// fidelity fractions, and writes summary + per-trial CSVs when out_dir is
/// set. Trials run on a small thread pool; output order is by trial index, so
/// results do not depend on scheduling.
inline BenchResult run_bench(const BenchConfig& config) {
    config.validate();
    const Dataset dataset = load_dataset(config.dataset_spec);

    BenchResult result;
    result.dataset_name = dataset.name;
    result.trials = config.trials;
    result.thresholds = config.thresholds;

    const std::size_t per_trial = config.methods.size();
    result.rows.assign(static_cast<std::size_t>(config.trials) * per_trial, TrialRow{});

    unsigned worker_count = config.threads > 0 ? static_cast<unsigned>(config.threads)
                                               : std::thread::hardware_concurrency();
    if (worker_count == 0) worker_count = 1;
    worker_count = std::min<unsigned>(worker_count, static_cast<unsigned>(config.trials));

    std::atomic<int> next_trial{0};
    auto worker = [&] {
        while (true) {
            const int trial = next_trial.fetch_add(1);
            if (trial >= config.trials) break;
            for (std::size_t mi = 0; mi < per_trial; ++mi) {
                result.rows[static_cast<std::size_t>(trial) * per_trial + mi] =
                    detail::bench_one(dataset, config, trial, config.methods[mi]);
            }
        }
    };
    if (worker_count <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(worker_count);
        for (unsigned i = 0; i < worker_count; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    // Aggregate per method.
    for (std::size_t mi = 0; mi < per_trial; ++mi) {
        MethodStats stats;
        stats.method = config.methods[mi];
        stats.fidelity_fraction.assign(config.thresholds.size(), 0.0);
        stats.mean_iters_to.assign(config.thresholds.size(), -1.0);
        std::vector<double> iter_sums(config.thresholds.size(), 0.0);
        std::vector<int> iter_counts(config.thresholds.size(), 0);
        int correct = 0;
        int finished = 0;
        double mse_sum = 0.0;
        for (int trial = 0; trial < config.trials; ++trial) {
            const TrialRow& row = result.rows[static_cast<std::size_t>(trial) * per_trial + mi];
            if (row.aborted) {
                ++stats.aborted_trials;
                continue;
            }
            if (row.label_correct) ++correct;
            ++finished;
            mse_sum += row.final_mse;
            for (std::size_t k = 0; k < config.thresholds.size(); ++k) {
                if (row.final_mse < config.thresholds[k]) {
                    stats.fidelity_fraction[k] += 1.0;
                }
                if (row.iters_to[k] >= 0) {
                    iter_sums[k] += row.iters_to[k];
                    ++iter_counts[k];
                }
            }
        }
        stats.label_accuracy = static_cast<double>(correct) / config.trials;
        for (double& f : stats.fidelity_fraction) f /= config.trials;
        if (finished > 0) stats.mean_final_mse = mse_sum / finished;
        for (std::size_t k = 0; k < config.thresholds.size(); ++k) {
            if (iter_counts[k] > 0) stats.mean_iters_to[k] = iter_sums[k] / iter_counts[k];
        }
        result.methods.push_back(std::move(stats));
    }

    if (!config.out_dir.empty()) {
        namespace fs = std::filesystem;
        fs::create_directories(config.out_dir);
        const fs::path summary_path = fs::path(config.out_dir) / "summary.csv";
        const fs::path trials_path = fs::path(config.out_dir) / "trials.csv";

        std::ofstream summary(summary_path);
        if (!summary) throw IoError("cannot write " + summary_path.string());
        summary << "method,dataset,trials,label_accuracy";
        for (double t : config.thresholds) {
            summary << ",fidelity_" << detail::format_threshold(t);
        }
        summary << "\n";
        for (const MethodStats& stats : result.methods) {
            summary << method_name(stats.method) << "," << result.dataset_name << ","
                    << result.trials << "," << detail::format_fraction(stats.label_accuracy);
            for (double f : stats.fidelity_fraction) {
                summary << "," << detail::format_fraction(f);
            }
            summary << "\n";
        }

        std::ofstream trials(trials_path);
        if (!trials) throw IoError("cannot write " + trials_path.string());
        trials << "trial,seed,method,extracted_label,true_label,final_mse,min_mse";
        for (double t : config.thresholds) {
            trials << ",iters_to_" << detail::format_threshold(t);
        }
        trials << "\n";
        for (const TrialRow& row : result.rows) {
            trials << row.trial << "," << row.seed << "," << method_name(row.method) << ","
                   << row.extracted_label << "," << row.true_label << ","
                   << detail::format_mse(row.final_mse) << "," << detail::format_mse(row.min_mse);
            for (int it : row.iters_to) trials << "," << it;
            trials << "\n";
        }
        result.summary_csv_path = summary_path.string();
        result.trials_csv_path = trials_path.string();
    }
    return result;
}

/// Clamp to [0, 1], scale by 255, round to nearest byte; PGM (P5) for one
/// channel, PPM (P6) for three.
inline void export_image(const Tensor& t, const std::string& path) {
    if (t.rank() != 3 || (t.extent(0) != 1 && t.extent(0) != 3)) {
        throw DimensionError("export_image expects [1|3 x H x W], got " + t.shape_string());
    }
    const std::size_t channels = t.extent(0);
    const std::size_t h = t.extent(1), w = t.extent(2);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image file: " + path);
    out << (channels == 1 ? "P5" : "P6") << "\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> payload;
    payload.reserve(h * w * channels);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t c = 0; c < channels; ++c) {
                const double v = std::clamp(t.at(c, y, x), 0.0, 1.0);
                payload.push_back(static_cast<unsigned char>(std::lround(v * 255.0)));
            }
        }
    }
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    if (!out) throw IoError("failed while writing image file: " + path);
}

}  // namespace gradleak
