#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "gradleak/errors.hpp"
#include "gradleak/tensor.hpp"

namespace gradleak {

inline constexpr std::size_t kImageSide = 32;

/// Uniformly shaped labeled image collection. Every image is [channels x 32 x 32]
/// with pixels in [0, 1]; every label is below num_classes.
struct Dataset {
    std::string name;
    std::vector<Tensor> images;
    std::vector<std::size_t> labels;
    std::size_t num_classes = 0;
    std::size_t channels = 0;

    std::size_t size() const { return images.size(); }

    void validate() const {
        if (images.size() != labels.size()) {
            throw DimensionError("dataset '" + name + "': " + std::to_string(images.size()) +
                                 " images vs " + std::to_string(labels.size()) + " labels");
        }
        if (images.empty()) throw EmptyDatasetError("dataset '" + name + "' has no samples");
        for (std::size_t i = 0; i < images.size(); ++i) {
            const Tensor& img = images[i];
            if (img.rank() != 3 || img.extent(0) != channels || img.extent(1) != kImageSide ||
                img.extent(2) != kImageSide) {
                throw DimensionError("dataset '" + name + "' image " + std::to_string(i) +
                                     " has shape " + img.shape_string());
            }
            for (std::size_t j = 0; j < img.size(); ++j) {
                if (!(img[j] >= 0.0 && img[j] <= 1.0)) {
                    throw DimensionError("dataset '" + name + "' image " + std::to_string(i) +
                                         " has pixel outside [0, 1]");
                }
            }
            if (labels[i] >= num_classes) {
                throw IndexError("dataset '" + name + "' label " + std::to_string(labels[i]) +
                                 " >= num_classes " + std::to_string(num_classes));
            }
        }
    }
};

/// Align-corners-false bilinear resize of a [C x H x W] image to
/// [C x out_side x out_side]. Uses the lerp form, so constant images map to
/// constant images exactly and same-size resize is the identity.
inline Tensor resize_bilinear(const Tensor& img, std::size_t out_side) {
    if (img.rank() != 3) {
        throw DimensionError("resize_bilinear expects [C x H x W], got " + img.shape_string());
    }
    if (out_side == 0) throw DimensionError("resize_bilinear output side must be positive");
    const std::size_t c_n = img.extent(0), in_h = img.extent(1), in_w = img.extent(2);
    Tensor out({c_n, out_side, out_side});
    const double scale_y = static_cast<double>(in_h) / static_cast<double>(out_side);
    const double scale_x = static_cast<double>(in_w) / static_cast<double>(out_side);
    auto lerp = [](double a, double b, double t) { return a + t * (b - a); };
    for (std::size_t oy = 0; oy < out_side; ++oy) {
        double sy = (static_cast<double>(oy) + 0.5) * scale_y - 0.5;
        sy = std::clamp(sy, 0.0, static_cast<double>(in_h - 1));
        const std::size_t y0 = static_cast<std::size_t>(sy);
        const std::size_t y1 = std::min(y0 + 1, in_h - 1);
        const double fy = sy - static_cast<double>(y0);
        for (std::size_t ox = 0; ox < out_side; ++ox) {
            double sx = (static_cast<double>(ox) + 0.5) * scale_x - 0.5;
            sx = std::clamp(sx, 0.0, static_cast<double>(in_w - 1));
            const std::size_t x0 = static_cast<std::size_t>(sx);
            const std::size_t x1 = std::min(x0 + 1, in_w - 1);
            const double fx = sx - static_cast<double>(x0);
            for (std::size_t c = 0; c < c_n; ++c) {
                const double top = lerp(img.at(c, y0, x0), img.at(c, y0, x1), fx);
                const double bot = lerp(img.at(c, y1, x0), img.at(c, y1, x1), fx);
                out.at(c, oy, ox) = lerp(top, bot, fy);
            }
        }
    }
    return out;
}

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

inline std::uint32_t read_be_u32(const std::vector<unsigned char>& bytes, std::size_t offset,
                                 const std::string& path) {
    if (offset + 4 > bytes.size()) {
        throw ParseError(path, offset, "file truncated while reading a 32-bit field");
    }
    return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
           (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
           static_cast<std::uint32_t>(bytes[offset + 3]);
}

}  // namespace detail

/// MNIST-style IDX pair: big-endian magics 0x00000803 (images, unsigned-byte
/// rows x cols records) and 0x00000801 (labels, one byte each). Pixels are
/// scaled by 1/255 and images bilinearly resized to 32x32; 10 classes.
inline Dataset load_mnist(const std::string& images_path, const std::string& labels_path) {
    const auto img_bytes = detail::read_file_bytes(images_path);
    const auto lbl_bytes = detail::read_file_bytes(labels_path);

    const std::uint32_t img_magic = detail::read_be_u32(img_bytes, 0, images_path);
    if (img_magic != 0x00000803u) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%08x", img_magic);
        throw ParseError(images_path, 0,
                         "bad image-file magic 0x" + std::string(buf) + " (expected 0x00000803)");
    }
    const std::uint32_t count = detail::read_be_u32(img_bytes, 4, images_path);
    const std::uint32_t rows = detail::read_be_u32(img_bytes, 8, images_path);
    const std::uint32_t cols = detail::read_be_u32(img_bytes, 12, images_path);
    if (rows == 0 || cols == 0) {
        throw ParseError(images_path, 8, "image extents must be positive");
    }
    const std::size_t expected_img = 16 + static_cast<std::size_t>(count) * rows * cols;
    if (img_bytes.size() < expected_img) {
        throw ParseError(images_path, img_bytes.size(), "file truncated: expected " +
                                                            std::to_string(expected_img) +
                                                            " bytes");
    }
    if (img_bytes.size() > expected_img) {
        throw ParseError(images_path, expected_img, "trailing bytes after last record");
    }

    const std::uint32_t lbl_magic = detail::read_be_u32(lbl_bytes, 0, labels_path);
    if (lbl_magic != 0x00000801u) {
        throw ParseError(labels_path, 0, "bad label-file magic (expected 0x00000801)");
    }
    const std::uint32_t lbl_count = detail::read_be_u32(lbl_bytes, 4, labels_path);
    if (lbl_count != count) {
        throw ParseError(labels_path, 4,
                         "label count " + std::to_string(lbl_count) + " != image count " +
                             std::to_string(count));
    }
    const std::size_t expected_lbl = 8 + static_cast<std::size_t>(count);
    if (lbl_bytes.size() < expected_lbl) {
        throw ParseError(labels_path, lbl_bytes.size(), "file truncated: expected " +
                                                            std::to_string(expected_lbl) +
                                                            " bytes");
    }
    if (lbl_bytes.size() > expected_lbl) {
        throw ParseError(labels_path, expected_lbl, "trailing bytes after last record");
    }

    Dataset ds;
    ds.name = "mnist";
    ds.channels = 1;
    ds.num_classes = 10;
    ds.images.reserve(count);
    ds.labels.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Tensor raw({1, rows, cols});
        const std::size_t base = 16 + static_cast<std::size_t>(i) * rows * cols;
        for (std::size_t j = 0; j < static_cast<std::size_t>(rows) * cols; ++j) {
            raw[j] = static_cast<double>(img_bytes[base + j]) / 255.0;
        }
        ds.images.push_back(rows == kImageSide && cols == kImageSide
                                ? raw
                                : resize_bilinear(raw, kImageSide));
        const unsigned char label = lbl_bytes[8 + i];
        if (label >= ds.num_classes) {
            throw ParseError(labels_path, 8 + i,
                             "label " + std::to_string(label) + " out of range for 10 classes");
        }
        ds.labels.push_back(label);
    }
    ds.validate();
    return ds;
}

/// CIFAR-100 binary: 3074-byte records of coarse label (ignored), fine label,
/// then 3072 bytes of channel-major 32x32 R, G, B planes. 100 classes.
inline Dataset load_cifar100(const std::string& bin_path) {
    constexpr std::size_t kRecord = 3074;
    constexpr std::size_t kPlane = kImageSide * kImageSide;
    const auto bytes = detail::read_file_bytes(bin_path);
    if (bytes.empty() || bytes.size() % kRecord != 0) {
        throw ParseError(bin_path, bytes.size(),
                         "file length " + std::to_string(bytes.size()) +
                             " is not a positive multiple of 3074");
    }
    Dataset ds;
    ds.name = "cifar100";
    ds.channels = 3;
    ds.num_classes = 100;
    const std::size_t count = bytes.size() / kRecord;
    ds.images.reserve(count);
    ds.labels.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t base = i * kRecord;
        const unsigned char fine = bytes[base + 1];
        if (fine >= ds.num_classes) {
            throw ParseError(bin_path, base + 1,
                             "fine label " + std::to_string(fine) + " out of range for 100 classes");
        }
        Tensor img({3, kImageSide, kImageSide});
        for (std::size_t j = 0; j < 3 * kPlane; ++j) {
            img[j] = static_cast<double>(bytes[base + 2 + j]) / 255.0;
        }
        ds.images.push_back(std::move(img));
        ds.labels.push_back(fine);
    }
    ds.validate();
    return ds;
}

namespace detail {

/// Binary PPM (P6, maxval 255) reader. Header tokens may be separated by
/// whitespace and '#' comments.
inline Tensor load_ppm(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&]() -> std::size_t {
        skip_space();
        if (pos >= bytes.size() || !std::isdigit(bytes[pos])) {
            throw ParseError(path, pos, "expected an integer in PPM header");
        }
        std::size_t v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            ++pos;
        }
        return v;
    };

    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
        throw ParseError(path, 0, "not a binary PPM (P6) file");
    }
    pos = 2;
    const std::size_t width = read_int();
    const std::size_t height = read_int();
    const std::size_t maxval = read_int();
    if (width == 0 || height == 0) throw ParseError(path, pos, "PPM extents must be positive");
    if (maxval != 255) {
        throw ParseError(path, pos, "PPM maxval must be 255, got " + std::to_string(maxval));
    }
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
        throw ParseError(path, pos, "expected single whitespace after PPM maxval");
    }
    ++pos;  // exactly one whitespace byte before the payload
    const std::size_t need = width * height * 3;
    if (bytes.size() - pos < need) {
        throw ParseError(path, bytes.size(), "PPM payload truncated: expected " +
                                                 std::to_string(need) + " bytes");
    }
    Tensor img({3, height, width});
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            for (std::size_t c = 0; c < 3; ++c) {
                img.at(c, y, x) =
                    static_cast<double>(bytes[pos + (y * width + x) * 3 + c]) / 255.0;
            }
        }
    }
    return img;
}

}  // namespace detail

/// Directory-of-classes loader: each subdirectory of `root` is one class
/// (class index = lexicographic rank of the subdirectory name) and holds
/// binary P6 PPM images, resized to 32x32.
inline Dataset load_image_dir(const std::string& root_path) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root_path)) {
        throw IoError("not a directory: " + root_path);
    }
    std::vector<fs::path> class_dirs;
    for (const auto& entry : fs::directory_iterator(root_path)) {
        if (entry.is_directory()) class_dirs.push_back(entry.path());
    }
    std::sort(class_dirs.begin(), class_dirs.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
    if (class_dirs.empty()) {
        throw EmptyDatasetError("no class subdirectories under " + root_path);
    }

    Dataset ds;
    ds.name = "dir";
    ds.channels = 3;
    ds.num_classes = class_dirs.size();
    for (std::size_t cls = 0; cls < class_dirs.size(); ++cls) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(class_dirs[cls])) {
            if (entry.is_regular_file()) files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& file : files) {
            Tensor img = detail::load_ppm(file.string());
            ds.images.push_back(img.extent(1) == kImageSide && img.extent(2) == kImageSide
                                    ? img
                                    : resize_bilinear(img, kImageSide));
            ds.labels.push_back(cls);
        }
    }
    if (ds.images.empty()) {
        throw EmptyDatasetError("no PPM images under " + root_path);
    }
    ds.validate();
    return ds;
}

/// Synthetic dataset: uniform [0, 1) pixels, uniform labels. Deterministic
/// for a given generator state.
inline Dataset synthetic_dataset(Rng& rng, std::size_t count, std::size_t channels,
                                 std::size_t num_classes) {
    if (count < 1) throw UsageError("synthetic_dataset count must be at least 1");
    if (channels != 1 && channels != 3) {
        throw UsageError("synthetic_dataset channels must be 1 or 3");
    }
    if (num_classes < 2) throw UsageError("synthetic_dataset needs at least 2 classes");
    Dataset ds;
    ds.name = "synthetic";
    ds.channels = channels;
    ds.num_classes = num_classes;
    ds.images.reserve(count);
    ds.labels.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        ds.images.push_back(sample_uniform(rng, {channels, kImageSide, kImageSide}, 0.0, 1.0));
        ds.labels.push_back(static_cast<std::size_t>(rng.next_u64() % num_classes));
    }
    ds.validate();
    return ds;
}

}  // namespace gradleak
