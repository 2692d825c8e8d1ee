// Acceptance suite: runs every release criterion at its stated tolerance and
// prints one PASS/FAIL line per criterion. Exit code = number of hard
// failures. Heavy benchmark criteria share fixture datasets generated on the
// fly in the exact on-disk formats the loaders consume.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gradleak/gradleak.hpp"

using namespace gradleak;
namespace fs = std::filesystem;

namespace {

struct Criterion {
    int id = 0;
    std::string name;
    bool pass = false;
    bool warn = false;
    std::string detail;
};

double elapsed_s(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(double v, const char* spec = "%.6g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

bool fd_close(double got, double want, double rtol, double atol) {
    return std::fabs(got - want) <= atol + rtol * std::max(std::fabs(got), std::fabs(want));
}

template <typename F>
double central_diff(F&& f, double& slot, double h) {
    const double saved = slot;
    slot = saved + h;
    const double fp = f();
    slot = saved - h;
    const double fm = f();
    slot = saved;
    return (fp - fm) / (2.0 * h);
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---- fixture data -------------------------------------------------------

Tensor smooth_image(Rng& rng, std::size_t channels, std::size_t side) {
    Tensor low = sample_uniform(rng, {channels, 8, 8}, 0.0, 1.0);
    return resize_bilinear(low, side);
}

void push_be_u32(std::vector<unsigned char>& bytes, std::uint32_t v) {
    bytes.push_back(static_cast<unsigned char>(v >> 24));
    bytes.push_back(static_cast<unsigned char>(v >> 16));
    bytes.push_back(static_cast<unsigned char>(v >> 8));
    bytes.push_back(static_cast<unsigned char>(v));
}

void write_bytes(const fs::path& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write fixture " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

unsigned char quantize(double v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// IDX image/label pair with smooth random 28x28 content, labels uniform 0-9.
void make_mnist_fixture(const fs::path& images, const fs::path& labels, std::size_t count,
                        std::uint64_t seed) {
    Rng rng(seed);
    std::vector<unsigned char> img_bytes, lbl_bytes;
    push_be_u32(img_bytes, 0x00000803u);
    push_be_u32(img_bytes, static_cast<std::uint32_t>(count));
    push_be_u32(img_bytes, 28);
    push_be_u32(img_bytes, 28);
    push_be_u32(lbl_bytes, 0x00000801u);
    push_be_u32(lbl_bytes, static_cast<std::uint32_t>(count));
    for (std::size_t i = 0; i < count; ++i) {
        Tensor img = smooth_image(rng, 1, 28);
        for (std::size_t j = 0; j < img.size(); ++j) img_bytes.push_back(quantize(img[j]));
        lbl_bytes.push_back(static_cast<unsigned char>(rng.next_u64() % 10));
    }
    write_bytes(images, img_bytes);
    write_bytes(labels, lbl_bytes);
}

/// CIFAR-100 binary with smooth random 3x32x32 content, fine labels 0-99.
void make_cifar_fixture(const fs::path& bin, std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<unsigned char> bytes;
    bytes.reserve(count * 3074);
    for (std::size_t i = 0; i < count; ++i) {
        bytes.push_back(static_cast<unsigned char>(rng.next_u64() % 20));  // coarse, ignored
        bytes.push_back(static_cast<unsigned char>(rng.next_u64() % 100));
        Tensor img = smooth_image(rng, 3, 32);
        for (std::size_t j = 0; j < img.size(); ++j) bytes.push_back(quantize(img[j]));
    }
    write_bytes(bin, bytes);
}

/// PPM directory tree with one 64x64 image per class.
void make_ppm_tree(const fs::path& root, std::size_t classes, std::uint64_t seed) {
    Rng rng(seed);
    for (std::size_t cls = 0; cls < classes; ++cls) {
        char name[16];
        std::snprintf(name, sizeof name, "c%03zu", cls);
        const fs::path dir = root / name;
        fs::create_directories(dir);
        Tensor img = smooth_image(rng, 3, 64);
        std::string header = "P6\n64 64\n255\n";
        std::vector<unsigned char> bytes(header.begin(), header.end());
        for (std::size_t y = 0; y < 64; ++y) {
            for (std::size_t x = 0; x < 64; ++x) {
                for (std::size_t c = 0; c < 3; ++c) bytes.push_back(quantize(img.at(c, y, x)));
            }
        }
        write_bytes(dir / "face.ppm", bytes);
    }
}

// ---- criterion 1: label extraction exactness ----------------------------

struct ExtractionCount {
    int trials = 0;
    int failures = 0;
};

ExtractionCount extraction_trials(const Dataset& ds, int trials, std::uint64_t seed_base) {
    ExtractionCount count;
    for (int t = 0; t < trials; ++t) {
        Architecture arch;
        arch.in_channels = ds.channels;
        arch.num_classes = ds.num_classes;
        Rng rng(seed_base + static_cast<std::uint64_t>(t));
        Model model = init_model(arch, rng);
        const std::size_t sample = static_cast<std::size_t>(t) % ds.size();
        GradSet shared = backward(model, ds.images[sample], ds.labels[sample]);
        LabelPrediction pred = extract_label(shared.fc_w);
        ++count.trials;
        if (pred.label != ds.labels[sample] || !pred.exact) ++count.failures;
    }
    return count;
}

Criterion criterion1(const fs::path& fixtures) {
    Criterion c{1, "label extraction exactness (100% over all datasets)"};
    Rng synth_rng(kSyntheticDataSeed);
    Dataset synthetic = synthetic_dataset(synth_rng, 64, 1, 10);
    Dataset mnist = load_mnist((fixtures / "train-images.idx").string(),
                               (fixtures / "train-labels.idx").string());
    Dataset cifar = load_cifar100((fixtures / "cifar100.bin").string());
    Dataset faces = load_image_dir((fixtures / "faces").string());

    const ExtractionCount s = extraction_trials(synthetic, 1000, 10000);
    const ExtractionCount m = extraction_trials(mnist, 200, 20000);
    const ExtractionCount f = extraction_trials(cifar, 200, 30000);
    const ExtractionCount l = extraction_trials(faces, 200, 40000);

    const int failures = s.failures + m.failures + f.failures + l.failures;
    c.pass = failures == 0;
    c.detail = "synthetic " + std::to_string(s.trials - s.failures) + "/" +
               std::to_string(s.trials) + ", mnist " + std::to_string(m.trials - m.failures) +
               "/" + std::to_string(m.trials) + ", cifar100 " +
               std::to_string(f.trials - f.failures) + "/" + std::to_string(f.trials) +
               ", dir(100-class) " + std::to_string(l.trials - l.failures) + "/" +
               std::to_string(l.trials);
    return c;
}

// ---- criteria 2-4: benchmark comparisons --------------------------------

struct BenchPair {
    BenchResult mnist100;  // 100 trials, both methods
    BenchResult cifar50;   // 50 trials, both methods
};

const MethodStats& stats_for(const BenchResult& r, Method m) {
    for (const MethodStats& s : r.methods) {
        if (s.method == m) return s;
    }
    throw Error("method missing from bench result");
}

/// Fidelity fractions over the first `limit` trials of a bench.
std::vector<double> fidelity_head(const BenchResult& r, Method m, int limit) {
    std::vector<double> frac(r.thresholds.size(), 0.0);
    int counted = 0;
    for (const TrialRow& row : r.rows) {
        if (row.method != m || row.trial >= limit) continue;
        ++counted;
        if (row.aborted) continue;
        for (std::size_t k = 0; k < r.thresholds.size(); ++k) {
            if (row.final_mse >= 0.0 && row.final_mse < r.thresholds[k]) frac[k] += 1.0;
        }
    }
    for (double& f : frac) f /= std::max(counted, 1);
    return frac;
}

Criterion criterion2(const BenchPair& benches) {
    Criterion c{2, "DLG label accuracy < iDLG accuracy = 100% (100-trial MNIST bench)"};
    const double idlg = stats_for(benches.mnist100, Method::idlg).label_accuracy;
    const double dlg = stats_for(benches.mnist100, Method::dlg).label_accuracy;
    c.pass = idlg == 1.0 && dlg < 1.0;
    const bool in_band = dlg >= 0.799 && dlg <= 0.999;
    c.warn = c.pass && !in_band;
    c.detail = "idlg " + fmt(idlg, "%.4f") + ", dlg " + fmt(dlg, "%.4f") +
               (in_band ? " (inside 89.9% +/- 10pt band)" : " (outside 89.9% +/- 10pt band)");
    return c;
}

Criterion criterion3(const BenchPair& benches) {
    Criterion c{3, "iDLG fidelity dominates DLG at every threshold (50-trial benches)"};
    bool dominated = true;
    bool mnist_gap = false, cifar_gap = false;
    std::ostringstream detail;

    const std::vector<double> mi = fidelity_head(benches.mnist100, Method::idlg, 50);
    const std::vector<double> md = fidelity_head(benches.mnist100, Method::dlg, 50);
    for (std::size_t k = 0; k < mi.size(); ++k) {
        if (mi[k] < md[k]) dominated = false;
        if (mi[k] > md[k]) mnist_gap = true;
    }
    const std::vector<double> ci = fidelity_head(benches.cifar50, Method::idlg, 50);
    const std::vector<double> cd = fidelity_head(benches.cifar50, Method::dlg, 50);
    for (std::size_t k = 0; k < ci.size(); ++k) {
        if (ci[k] < cd[k]) dominated = false;
        if (ci[k] > cd[k]) cifar_gap = true;
    }

    detail << "mnist idlg [";
    for (std::size_t k = 0; k < mi.size(); ++k) detail << (k ? " " : "") << fmt(mi[k], "%.2f");
    detail << "] vs dlg [";
    for (std::size_t k = 0; k < md.size(); ++k) detail << (k ? " " : "") << fmt(md[k], "%.2f");
    detail << "]; cifar idlg [";
    for (std::size_t k = 0; k < ci.size(); ++k) detail << (k ? " " : "") << fmt(ci[k], "%.2f");
    detail << "] vs dlg [";
    for (std::size_t k = 0; k < cd.size(); ++k) detail << (k ? " " : "") << fmt(cd[k], "%.2f");
    detail << "]; strict gap on " << (mnist_gap ? "mnist" : "") << (mnist_gap && cifar_gap ? "+" : "")
           << (cifar_gap ? "cifar" : "") << (!mnist_gap && !cifar_gap ? "neither" : "");

    // Dominance must hold at every (bench, threshold); the criterion requires
    // a strict gap at at least one threshold overall.
    c.pass = dominated && (mnist_gap || cifar_gap);
    c.detail = detail.str();
    return c;
}

Criterion criterion4(const BenchPair& benches) {
    Criterion c{4, "iDLG median iterations to MSE < 1e-2 <= DLG's (soft)"};
    // Pool criterion-3 trials where both methods reached the threshold.
    std::vector<double> idlg_iters, dlg_iters;
    auto collect = [&](const BenchResult& r, int limit) {
        const std::size_t tau_index = [&] {
            for (std::size_t k = 0; k < r.thresholds.size(); ++k) {
                if (r.thresholds[k] == 1e-2) return k;
            }
            throw Error("1e-2 threshold missing from bench");
        }();
        for (int trial = 0; trial < limit; ++trial) {
            std::optional<int> it_idlg, it_dlg;
            for (const TrialRow& row : r.rows) {
                if (row.trial != trial) continue;
                if (row.method == Method::idlg && row.iters_to[tau_index] >= 0) {
                    it_idlg = row.iters_to[tau_index];
                }
                if (row.method == Method::dlg && row.iters_to[tau_index] >= 0) {
                    it_dlg = row.iters_to[tau_index];
                }
            }
            if (it_idlg && it_dlg) {
                idlg_iters.push_back(*it_idlg);
                dlg_iters.push_back(*it_dlg);
            }
        }
    };
    collect(benches.mnist100, 50);
    collect(benches.cifar50, 50);

    if (idlg_iters.empty()) {
        c.pass = false;
        c.detail = "no trial had both methods reach MSE < 1e-2";
        return c;
    }
    const double mi = median(idlg_iters);
    const double md = median(dlg_iters);
    c.detail = "median iters: idlg " + fmt(mi, "%.1f") + ", dlg " + fmt(md, "%.1f") + " over " +
               std::to_string(idlg_iters.size()) + " paired trials";
    if (mi <= md) {
        c.pass = true;
    } else if (md > 0.0 && (mi - md) / md < 0.10) {
        c.pass = true;  // soft assertion: flag, don't fail
        c.warn = true;
        c.detail += " (regression < 10%, flagged)";
    } else {
        c.pass = false;
    }
    return c;
}

// ---- criterion 5: gradient correctness ----------------------------------

Criterion criterion5() {
    Criterion c{5, "first/second-order gradients match finite differences"};
    struct Shape {
        std::size_t channels, classes;
    };
    const Shape shapes[] = {{1, 10}, {3, 100}, {3, 5749}};
    int checked_first = 0, checked_second = 0;
    double worst_first = 0.0, worst_second = 0.0;
    bool ok = true;

    for (const Shape& shape : shapes) {
        for (int instance = 0; instance < 20 && ok; ++instance) {
            const std::uint64_t seed = 7000 + shape.classes * 100 + instance;
            Architecture arch;
            arch.in_channels = shape.channels;
            arch.num_classes = shape.classes;
            Rng rng(seed);
            Model m = init_model(arch, rng);
            Tensor x = sample_uniform(rng, {shape.channels, 32, 32}, 0.0, 1.0);
            const std::size_t cls = rng.next_u64() % shape.classes;

            // First order: every parameter tensor, a few spread coordinates.
            GradSet g = backward(m, x, cls);
            m.params.for_each([&](const char* name, Tensor& param) {
                if (!ok) return;
                Tensor* grad = nullptr;
                g.for_each([&](const char* gname, Tensor& gt) {
                    if (std::string(gname) == name) grad = &gt;
                });
                for (int pick = 0; pick < 3 && ok; ++pick) {
                    const std::size_t idx = (pick * param.size()) / 3 + instance % 7;
                    if (idx >= param.size()) continue;
                    auto loss = [&] { return cross_entropy(forward(m, x).logits, cls); };
                    const double fd = central_diff(loss, param[idx], 1e-5);
                    const double got = (*grad)[idx];
                    worst_first = std::max(
                        worst_first, std::fabs(got - fd) / std::max({std::fabs(got),
                                                                     std::fabs(fd), 1e-9}));
                    ++checked_first;
                    if (!fd_close(got, fd, 1e-6, 1e-9)) {
                        ok = false;
                        c.detail = std::string("first-order mismatch at ") + name + "[" +
                                   std::to_string(idx) + "]: grad " + fmt(got) + " vs fd " +
                                   fmt(fd);
                    }
                }
            });
            if (!ok) break;

            // Second order: input gradient of L_G against a realistic target.
            Tensor x2 = sample_uniform(rng, {shape.channels, 32, 32}, 0.0, 1.0);
            GradSet target = backward(m, x2, rng.next_u64() % shape.classes);
            Tensor ig = grad_match_input_grad(m, x, cls, target);
            for (int pick = 0; pick < 6 && ok; ++pick) {
                const std::size_t idx = (pick * x.size()) / 6 + instance % 11;
                if (idx >= x.size()) continue;
                auto loss = [&] { return grad_match_loss(m, x, cls, target); };
                const double fd = central_diff(loss, x[idx], 1e-3);
                const double got = ig[idx];
                worst_second = std::max(
                    worst_second,
                    std::fabs(got - fd) / std::max({std::fabs(got), std::fabs(fd), 1e-8}));
                ++checked_second;
                if (!fd_close(got, fd, 1e-4, 1e-8)) {
                    ok = false;
                    c.detail = "second-order mismatch at pixel " + std::to_string(idx) +
                               ": grad " + fmt(got) + " vs fd " + fmt(fd);
                }
            }
        }
        if (!ok) break;
    }
    c.pass = ok;
    if (ok) {
        c.detail = std::to_string(checked_first) + " first-order coords (worst rel " +
                   fmt(worst_first, "%.2e") + "), " + std::to_string(checked_second) +
                   " second-order coords (worst rel " + fmt(worst_second, "%.2e") +
                   ") across shapes 1x10 / 3x100 / 3x5749";
    }
    return c;
}

// ---- criterion 6: softmax-gradient sign structure ------------------------

Criterion criterion6() {
    Criterion c{6, "softmax-gradient sign structure over 10^4+ random logit vectors"};
    // Doubles cannot hold the open interval once the relevant logit gap passes
    // ln(2/eps) ~ 37.4: softmax saturates and g touches -1/+1 exactly. Strict
    // interiority is asserted below a gap of 36; at larger gaps the boundary
    // may be touched but the sign itself must still hold.
    constexpr double kSaturationGap = 36.0;
    Rng rng(606060);
    const std::size_t dims[] = {2, 10, 100, 5749};
    const double sigmas[] = {0.1, 1.0, 10.0};
    long total = 0;
    long saturated = 0;
    double worst_sum = 0.0;
    for (std::size_t dim : dims) {
        for (double sigma : sigmas) {
            for (int rep = 0; rep < 850; ++rep) {
                Tensor logits = scaled(sample_normal(rng, {dim}), sigma);
                const std::size_t cls = rng.next_u64() % dim;
                Tensor g = softmax_grad(logits, cls);
                double top = -1e300, second = -1e300;
                for (std::size_t i = 0; i < dim; ++i) {
                    if (logits[i] > top) {
                        second = top;
                        top = logits[i];
                    } else if (logits[i] > second) {
                        second = logits[i];
                    }
                }
                double sum = 0.0;
                for (std::size_t i = 0; i < dim; ++i) {
                    sum += g[i];
                    const double gap = logits[i] == top ? top - second : top - logits[i];
                    const bool strict = gap < kSaturationGap;
                    bool in_range;
                    if (i == cls) {
                        in_range = g[i] < 0.0 && g[i] >= -1.0 && (!strict || g[i] > -1.0);
                    } else {
                        in_range = g[i] > 0.0 && g[i] <= 1.0 && (!strict || g[i] < 1.0);
                    }
                    if (!strict && (g[i] == -1.0 || g[i] == 1.0)) ++saturated;
                    if (!in_range) {
                        c.pass = false;
                        c.detail = "component " + std::to_string(i) + " out of range at dim " +
                                   std::to_string(dim) + " sigma " + fmt(sigma) + ": " +
                                   fmt(g[i], "%.17g");
                        return c;
                    }
                }
                worst_sum = std::max(worst_sum, std::fabs(sum));
                if (std::fabs(sum) > 1e-12) {
                    c.pass = false;
                    c.detail = "gradient sum " + fmt(sum, "%.3e") + " exceeds 1e-12 at dim " +
                               std::to_string(dim);
                    return c;
                }
                ++total;
            }
        }
    }
    c.pass = true;
    c.detail = std::to_string(total) + " vectors across dims {2,10,100,5749}, sigma {0.1,1,10}; "
               "worst |sum g| " + fmt(worst_sum, "%.2e") + "; " + std::to_string(saturated) +
               " f64-saturated boundary contacts (sign still correct)";
    return c;
}

// ---- criterion 7: last-layer factorization ------------------------------

Criterion criterion7() {
    Criterion c{7, "fc.w gradient rows factor as g_i * hidden (rel err < 1e-12)"};
    double worst = 0.0;
    for (int instance = 0; instance < 100; ++instance) {
        const bool wide = instance % 2 == 1;
        Architecture arch;
        arch.in_channels = wide ? 3u : 1u;
        arch.num_classes = wide ? 100u : 10u;
        Rng rng(70000 + instance);
        Model m = init_model(arch, rng);
        Tensor x = sample_uniform(rng, {arch.in_channels, 32, 32}, 0.0, 1.0);
        const std::size_t cls = rng.next_u64() % arch.num_classes;
        ForwardTrace t = forward(m, x);
        GradSet g = backward(m, x, cls);

        // Independent recomputation of the per-logit gradient (complementary
        // sum for the true class, mirroring the production formulation).
        double mx = t.logits[0];
        for (std::size_t i = 1; i < t.logits.size(); ++i) mx = std::max(mx, t.logits[i]);
        double tail = 0.0;
        for (std::size_t i = 0; i < t.logits.size(); ++i) {
            if (i != cls) tail += std::exp(t.logits[i] - mx);
        }
        const double denom = tail + std::exp(t.logits[cls] - mx);
        for (std::size_t i = 0; i < arch.num_classes; ++i) {
            const double gi =
                i == cls ? -(tail / denom) : std::exp(t.logits[i] - mx) / denom;
            for (std::size_t j = 0; j < kHiddenSize; ++j) {
                const double want = gi * t.hidden[j];
                const double got = g.fc_w.at(i, j);
                const double rel = std::fabs(got - want) /
                                   std::max({std::fabs(got), std::fabs(want), 1e-300});
                worst = std::max(worst, rel);
                if (rel >= 1e-12) {
                    c.pass = false;
                    c.detail = "row " + std::to_string(i) + " col " + std::to_string(j) +
                               " rel err " + fmt(rel, "%.3e") + " at instance " +
                               std::to_string(instance);
                    return c;
                }
            }
        }
    }
    c.pass = true;
    c.detail = "100 instances; worst elementwise rel err " + fmt(worst, "%.2e");
    return c;
}

// ---- criterion 8: parser bit-exactness ----------------------------------

Criterion criterion8(const fs::path& scratch) {
    Criterion c{8, "parsers round-trip fixtures and reject corrupted ones with located errors"};
    const fs::path dir = scratch / "c8";
    fs::create_directories(dir);
    std::vector<std::string> problems;

    // IDX round trip at native 32x32 (no resample): bytes must be exact.
    {
        std::vector<unsigned char> img_bytes, lbl_bytes;
        push_be_u32(img_bytes, 0x00000803u);
        push_be_u32(img_bytes, 2);
        push_be_u32(img_bytes, 32);
        push_be_u32(img_bytes, 32);
        for (std::size_t i = 0; i < 2 * 32 * 32; ++i) {
            img_bytes.push_back(static_cast<unsigned char>((i * 31 + 5) % 256));
        }
        push_be_u32(lbl_bytes, 0x00000801u);
        push_be_u32(lbl_bytes, 2);
        lbl_bytes.push_back(4);
        lbl_bytes.push_back(9);
        write_bytes(dir / "ok.img", img_bytes);
        write_bytes(dir / "ok.lbl", lbl_bytes);
        Dataset ds = load_mnist((dir / "ok.img").string(), (dir / "ok.lbl").string());
        for (std::size_t rec = 0; rec < 2; ++rec) {
            for (std::size_t px = 0; px < 1024; ++px) {
                const double want = img_bytes[16 + rec * 1024 + px];
                if (ds.images[rec][px] * 255.0 != want) {
                    problems.push_back("idx pixel mismatch");
                    break;
                }
            }
        }
        if (ds.labels[0] != 4 || ds.labels[1] != 9) problems.push_back("idx labels mismatch");

        // corrupted variants
        auto expect_parse_error = [&](const fs::path& img, const fs::path& lbl,
                                      const std::string& what) {
            try {
                load_mnist(img.string(), lbl.string());
                problems.push_back(what + " accepted");
            } catch (const ParseError&) {
            } catch (const std::exception& e) {
                problems.push_back(what + " wrong error: " + e.what());
            }
        };
        std::vector<unsigned char> bad_magic = img_bytes;
        bad_magic[3] = 0x01;
        write_bytes(dir / "badmagic.img", bad_magic);
        expect_parse_error(dir / "badmagic.img", dir / "ok.lbl", "bad magic");

        std::vector<unsigned char> truncated(img_bytes.begin(), img_bytes.end() - 100);
        write_bytes(dir / "trunc.img", truncated);
        expect_parse_error(dir / "trunc.img", dir / "ok.lbl", "truncated images");

        std::vector<unsigned char> extra_label = lbl_bytes;
        extra_label[7] = 3;  // count 3 while images say 2
        extra_label.push_back(1);
        write_bytes(dir / "mismatch.lbl", extra_label);
        expect_parse_error(dir / "ok.img", dir / "mismatch.lbl", "count mismatch");
    }

    // CIFAR-100: plane order fixture + bad length.
    {
        std::vector<unsigned char> record(3074, 0);
        record[1] = 42;
        record[2 + 0] = 250;        // R (0, 0)
        record[2 + 1024 + 33] = 5;  // G (1, 1)
        write_bytes(dir / "ok.bin", record);
        Dataset ds = load_cifar100((dir / "ok.bin").string());
        if (ds.labels[0] != 42) problems.push_back("cifar label mismatch");
        if (ds.images[0].at(0, 0, 0) * 255.0 != 250.0) problems.push_back("cifar R plane wrong");
        if (ds.images[0].at(1, 1, 1) * 255.0 != 5.0) problems.push_back("cifar G plane wrong");

        write_bytes(dir / "short.bin", std::vector<unsigned char>(3073, 0));
        try {
            load_cifar100((dir / "short.bin").string());
            problems.push_back("bad cifar length accepted");
        } catch (const ParseError&) {
        }
    }

    // PPM: export -> parse round trip within 1/255, non-P6 rejected by name.
    {
        fs::create_directories(dir / "tree" / "a");
        Rng rng(88);
        Tensor img = sample_uniform(rng, {3, 32, 32}, 0.0, 1.0);
        export_image(img, (dir / "tree" / "a" / "x.ppm").string());
        Dataset ds = load_image_dir((dir / "tree").string());
        for (std::size_t i = 0; i < img.size(); ++i) {
            if (std::fabs(ds.images[0][i] - img[i]) > 0.5 / 255.0 + 1e-12) {
                problems.push_back("ppm round trip exceeded half a quantization step");
                break;
            }
        }
        fs::create_directories(dir / "badtree" / "a");
        write_bytes(dir / "badtree" / "a" / "bad.ppm", {'P', '3', ' ', '1', ' ', '1'});
        try {
            load_image_dir((dir / "badtree").string());
            problems.push_back("non-P6 accepted");
        } catch (const ParseError& e) {
            if (std::string(e.what()).find("bad.ppm") == std::string::npos) {
                problems.push_back("non-P6 error does not name the file");
            }
        }
    }

    // Export quantization rule: 0.5 -> 128 (round half up).
    {
        export_image(Tensor::full({1, 2, 2}, 0.5), (dir / "half.pgm").string());
        std::ifstream in(dir / "half.pgm", std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        const std::string bytes = ss.str();
        for (std::size_t i = bytes.size() - 4; i < bytes.size(); ++i) {
            if (static_cast<unsigned char>(bytes[i]) != 128) {
                problems.push_back("0.5 did not quantize to 128");
                break;
            }
        }
    }

    c.pass = problems.empty();
    if (c.pass) {
        c.detail = "IDX/CIFAR/PPM fixtures round-trip; corrupted fixtures rejected with offsets";
    } else {
        std::ostringstream ss;
        for (const std::string& p : problems) ss << p << "; ";
        c.detail = ss.str();
    }
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    int threads = 0;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--threads" && i + 1 < argc) threads = std::atoi(argv[++i]);
    }

    const fs::path scratch =
        fs::temp_directory_path() / ("gradleak_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(scratch);

    std::vector<Criterion> results;
    try {
        const auto t0 = std::chrono::steady_clock::now();
        std::cerr << "generating fixture datasets...\n";
        make_mnist_fixture(scratch / "train-images.idx", scratch / "train-labels.idx", 128, 101);
        make_cifar_fixture(scratch / "cifar100.bin", 128, 202);
        make_ppm_tree(scratch / "faces", 100, 303);

        std::cerr << "criterion 1 (extraction exactness)...\n";
        results.push_back(criterion1(scratch));
        std::cerr << "criterion 5 (gradient correctness)...\n";
        results.push_back(criterion5());
        std::cerr << "criterion 6 (sign structure)...\n";
        results.push_back(criterion6());
        std::cerr << "criterion 7 (factorization)...\n";
        results.push_back(criterion7());
        std::cerr << "criterion 8 (parsers)...\n";
        results.push_back(criterion8(scratch));

        std::cerr << "benchmarks for criteria 2-4 (this is the long part)...\n";
        BenchPair benches;
        {
            BenchConfig config;
            config.dataset_spec = "mnist:" + (scratch / "train-images.idx").string() + "," +
                                  (scratch / "train-labels.idx").string();
            config.methods = {Method::idlg, Method::dlg};
            config.trials = 100;
            config.iterations = 300;
            config.base_seed = 42;
            config.threads = threads;
            config.out_dir = (scratch / "bench_mnist").string();
            benches.mnist100 = run_bench(config);
            std::cerr << "  mnist bench done at " << fmt(elapsed_s(t0), "%.0f") << "s\n";
        }
        {
            BenchConfig config;
            config.dataset_spec = "cifar100:" + (scratch / "cifar100.bin").string();
            config.methods = {Method::idlg, Method::dlg};
            config.trials = 50;
            config.iterations = 300;
            config.base_seed = 42;
            config.threads = threads;
            config.out_dir = (scratch / "bench_cifar").string();
            benches.cifar50 = run_bench(config);
            std::cerr << "  cifar bench done at " << fmt(elapsed_s(t0), "%.0f") << "s\n";
        }
        results.push_back(criterion2(benches));
        results.push_back(criterion3(benches));
        results.push_back(criterion4(benches));
    } catch (const std::exception& e) {
        std::cerr << "acceptance suite aborted: " << e.what() << "\n";
        std::error_code ec;
        fs::remove_all(scratch, ec);
        return 99;
    }

    std::sort(results.begin(), results.end(),
              [](const Criterion& a, const Criterion& b) { return a.id < b.id; });
    int failures = 0;
    for (const Criterion& r : results) {
        const char* tag = r.pass ? (r.warn ? "PASS (flagged)" : "PASS") : "FAIL";
        std::cout << "[" << tag << "] criterion " << r.id << ": " << r.name << " -- " << r.detail
                  << "\n";
        if (!r.pass) ++failures;
    }
    std::error_code ec;
    fs::remove_all(scratch, ec);
    return failures;
}
