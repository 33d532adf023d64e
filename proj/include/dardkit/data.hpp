#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "dardkit/checkpoint.hpp"
#include "dardkit/error.hpp"
#include "dardkit/tensor.hpp"

namespace dardkit {

/// Labeled inputs, one sample per row, every value in [0, 1].
struct Batch {
    Matrix inputs;
    std::vector<int> labels;
    Shape shape;  // per-sample shape; shape_size(shape) == inputs.cols()

    std::size_t size() const { return labels.size(); }

    /// Throws DataError when the batch breaks its invariants.
    void validate(std::size_t num_classes) const {
        if (static_cast<std::size_t>(inputs.rows()) != labels.size()) {
            throw DataError("batch has " + std::to_string(inputs.rows()) + " inputs but " +
                            std::to_string(labels.size()) + " labels");
        }
        if (shape_size(shape) != static_cast<std::size_t>(inputs.cols())) {
            throw DataError("batch shape " + to_string(shape) + " does not match " + std::to_string(inputs.cols()) +
                            " features");
        }
        if (inputs.size() > 0 && !(inputs.minCoeff() >= 0.0 && inputs.maxCoeff() <= 1.0)) {
            throw DataError("batch inputs leave [0, 1]");
        }
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
                throw DataError("label " + std::to_string(labels[i]) + " of sample " + std::to_string(i) +
                                " is outside [0, " + std::to_string(num_classes) + ")");
            }
        }
    }

    Batch select(const std::vector<std::size_t>& rows) const {
        Batch out;
        out.shape = shape;
        out.inputs.resize(static_cast<Eigen::Index>(rows.size()), inputs.cols());
        out.labels.reserve(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            out.inputs.row(static_cast<Eigen::Index>(i)) = inputs.row(static_cast<Eigen::Index>(rows[i]));
            out.labels.push_back(labels[rows[i]]);
        }
        return out;
    }

    Batch slice(std::size_t begin, std::size_t end) const {
        std::vector<std::size_t> rows(end - begin);
        std::iota(rows.begin(), rows.end(), begin);
        return select(rows);
    }
};

struct Dataset {
    std::string id;
    std::size_t num_classes = 0;
    Batch records;

    std::size_t size() const { return records.size(); }
    const Shape& input_shape() const { return records.shape; }
};

// ---------------------------------------------------------------------------
// CIFAR binary files
// ---------------------------------------------------------------------------

enum class CifarKind { cifar10, cifar100 };

inline constexpr std::size_t kCifarPixels = 3 * 32 * 32;

inline std::size_t cifar_record_size(CifarKind kind) {
    return (kind == CifarKind::cifar10 ? 1 : 2) + kCifarPixels;
}

inline std::size_t cifar_num_classes(CifarKind kind) { return kind == CifarKind::cifar10 ? 10 : 100; }

/// Raw-byte view of a CIFAR binary file. Keeps the coarse CIFAR-100 labels so
/// the file can be re-serialised byte for byte.
struct CifarFile {
    CifarKind kind = CifarKind::cifar10;
    std::vector<std::uint8_t> coarse_labels;  // CIFAR-100 only
    std::vector<std::uint8_t> labels;         // CIFAR-10 label or CIFAR-100 fine label
    std::vector<std::uint8_t> pixels;         // records x 3072, channel planar (R, G, B)

    std::size_t size() const { return labels.size(); }
};

inline CifarFile parse_cifar_bytes(const std::vector<unsigned char>& bytes, CifarKind kind) {
    const std::size_t record = cifar_record_size(kind);
    if (bytes.empty() || bytes.size() % record != 0) {
        const std::size_t n = bytes.size() / record;
        throw FormatError("CIFAR file holds " + std::to_string(bytes.size()) + " bytes, not a positive multiple of the " +
                          std::to_string(record) + "-byte record (expected " + std::to_string(std::max<std::size_t>(n, 1) * record) +
                          " bytes for " + std::to_string(std::max<std::size_t>(n, 1)) + " records)");
    }
    const std::size_t n = bytes.size() / record;
    const std::size_t classes = cifar_num_classes(kind);
    CifarFile f;
    f.kind = kind;
    f.labels.reserve(n);
    f.pixels.reserve(n * kCifarPixels);
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned char* rec = bytes.data() + i * record;
        std::size_t off = 0;
        if (kind == CifarKind::cifar100) {
            if (rec[0] >= 20) {
                throw DataError("record " + std::to_string(i) + ": coarse label " + std::to_string(rec[0]) +
                                " is outside [0, 20)");
            }
            f.coarse_labels.push_back(rec[0]);
            off = 1;
        }
        if (rec[off] >= classes) {
            throw DataError("record " + std::to_string(i) + ": label " + std::to_string(rec[off]) + " is outside [0, " +
                            std::to_string(classes) + ")");
        }
        f.labels.push_back(rec[off]);
        f.pixels.insert(f.pixels.end(), rec + off + 1, rec + record);
    }
    return f;
}

inline CifarFile parse_cifar(const std::filesystem::path& path, CifarKind kind) {
    return parse_cifar_bytes(detail::read_file(path), kind);
}

inline std::vector<unsigned char> serialize_cifar(const CifarFile& f) {
    std::vector<unsigned char> out;
    out.reserve(f.size() * cifar_record_size(f.kind));
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (f.kind == CifarKind::cifar100) {
            out.push_back(f.coarse_labels[i]);
        }
        out.push_back(f.labels[i]);
        const auto* px = f.pixels.data() + i * kCifarPixels;
        out.insert(out.end(), px, px + kCifarPixels);
    }
    return out;
}

/// Pixels scaled to [0, 1]; CIFAR-100 keeps only the fine label.
inline Dataset to_dataset(const CifarFile& f, std::string id) {
    Dataset d;
    d.id = std::move(id);
    d.num_classes = cifar_num_classes(f.kind);
    d.records.shape = {3, 32, 32};
    d.records.inputs.resize(static_cast<Eigen::Index>(f.size()), static_cast<Eigen::Index>(kCifarPixels));
    for (std::size_t i = 0; i < f.size(); ++i) {
        for (std::size_t j = 0; j < kCifarPixels; ++j) {
            d.records.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                f.pixels[i * kCifarPixels + j] / 255.0;
        }
    }
    d.records.labels.assign(f.labels.begin(), f.labels.end());
    return d;
}

/// Concatenates several CIFAR files of the same kind (e.g. data_batch_1..5).
inline Dataset load_cifar(const std::vector<std::filesystem::path>& files, CifarKind kind, std::string id) {
    if (files.empty()) {
        throw ConfigError("no CIFAR files given");
    }
    CifarFile all;
    all.kind = kind;
    for (const auto& p : files) {
        CifarFile f = parse_cifar(p, kind);
        all.coarse_labels.insert(all.coarse_labels.end(), f.coarse_labels.begin(), f.coarse_labels.end());
        all.labels.insert(all.labels.end(), f.labels.begin(), f.labels.end());
        all.pixels.insert(all.pixels.end(), f.pixels.begin(), f.pixels.end());
    }
    return to_dataset(all, std::move(id));
}

// ---------------------------------------------------------------------------
// Synthetic blobs
// ---------------------------------------------------------------------------

/// Class-conditional Gaussian clusters in [0, 1]^dim.
///
/// The first `num_classes` coordinates carry a scaled one-hot centre
/// (0.8 on the class axis, 0.2 elsewhere) with noise 0.6 * spread. The
/// remaining coordinates carry a low-amplitude +/-`signature` class code around
/// 0.5 with noise 0.6 * spread * signature_noise. The code coordinates are
/// individually weak but jointly precise, so a naturally trained model leans on
/// features an l-inf adversary with budget >= 2 * signature can overturn.
struct BlobsSpec {
    std::uint64_t seed = 0;
    std::size_t num_classes = 10;
    std::size_t dim = 32;
    std::size_t n_per_class = 200;
    double spread = 0.3;
    double signature = 0.04;
    double signature_noise = 0.1;
};

namespace detail {

/// +/-1 class codes over `width` coordinates, fixed for a given
/// (num_classes, width) so train and test splits share them.
inline std::vector<std::vector<int>> blob_codes(std::size_t num_classes, std::size_t width) {
    std::mt19937_64 rng(0x5eedc0deULL + num_classes * 1315423911ULL + width);
    std::bernoulli_distribution coin(0.5);
    const std::size_t min_distance = width / 4;
    std::vector<std::vector<int>> codes;
    for (int attempt = 0; codes.size() < num_classes; ++attempt) {
        std::vector<int> c(width);
        for (auto& v : c) {
            v = coin(rng) ? 1 : -1;
        }
        const bool far = std::all_of(codes.begin(), codes.end(), [&](const std::vector<int>& o) {
            std::size_t d = 0;
            for (std::size_t i = 0; i < width; ++i) {
                d += (o[i] != c[i]) ? 1 : 0;
            }
            return d >= min_distance;
        });
        if (far || attempt > 10000) {
            codes.push_back(std::move(c));
        }
    }
    return codes;
}

}  // namespace detail

/// Centre of class k (before noise); exposed for tests.
inline Vector blob_center(const BlobsSpec& spec, std::size_t k) {
    const auto codes = detail::blob_codes(spec.num_classes, spec.dim - spec.num_classes);
    Vector c(static_cast<Eigen::Index>(spec.dim));
    for (std::size_t d = 0; d < spec.dim; ++d) {
        if (d < spec.num_classes) {
            c[static_cast<Eigen::Index>(d)] = d == k ? 0.8 : 0.2;
        } else {
            c[static_cast<Eigen::Index>(d)] = 0.5 + spec.signature * codes[k][d - spec.num_classes];
        }
    }
    return c;
}

inline Dataset synth_blobs(const BlobsSpec& spec) {
    if (spec.num_classes < 2) {
        throw ConfigError("synthetic blobs need num_classes >= 2, got " + std::to_string(spec.num_classes));
    }
    if (spec.dim < spec.num_classes) {
        throw ConfigError("synthetic blobs use one-hot centres: dim " + std::to_string(spec.dim) +
                          " < num_classes " + std::to_string(spec.num_classes));
    }
    if (!(spec.spread > 0.0) || !std::isfinite(spec.spread)) {
        throw ConfigError("synthetic blobs need spread > 0");
    }
    if (!(spec.signature >= 0.0 && spec.signature <= 0.5) || !(spec.signature_noise >= 0.0)) {
        throw ConfigError("synthetic blobs: signature must lie in [0, 0.5] and signature_noise must be >= 0");
    }
    if (spec.n_per_class == 0) {
        throw ConfigError("synthetic blobs need n_per_class >= 1");
    }
    std::vector<Vector> centers;
    for (std::size_t k = 0; k < spec.num_classes; ++k) {
        centers.push_back(blob_center(spec, k));
    }
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double sigma_class = 0.6 * spec.spread;
    const double sigma_code = sigma_class * spec.signature_noise;

    Dataset d;
    d.id = "blobs-k" + std::to_string(spec.num_classes) + "-d" + std::to_string(spec.dim) + "-s" +
           std::to_string(spec.seed);
    d.num_classes = spec.num_classes;
    d.records.shape = {spec.dim};
    const std::size_t n = spec.num_classes * spec.n_per_class;
    d.records.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(spec.dim));
    d.records.labels.resize(n);
    // Interleave classes so any prefix is roughly balanced.
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = i % spec.num_classes;
        d.records.labels[i] = static_cast<int>(k);
        for (std::size_t j = 0; j < spec.dim; ++j) {
            const double sigma = j < spec.num_classes ? sigma_class : sigma_code;
            const double v = centers[k][static_cast<Eigen::Index>(j)] + sigma * gauss(rng);
            d.records.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::clamp(v, 0.0, 1.0);
        }
    }
    return d;
}

inline Dataset synth_blobs(std::uint64_t seed, std::size_t num_classes, std::size_t dim, std::size_t n_per_class,
                           double spread) {
    BlobsSpec s;
    s.seed = seed;
    s.num_classes = num_classes;
    s.dim = dim;
    s.n_per_class = n_per_class;
    s.spread = spread;
    return synth_blobs(s);
}

/// Train/test pair drawn from independent streams of the same geometry.
struct Split {
    Dataset train;
    Dataset test;
};

inline Split blobs_split(BlobsSpec spec, std::size_t n_train_per_class, std::size_t n_test_per_class) {
    spec.n_per_class = n_train_per_class;
    Split s;
    s.train = synth_blobs(spec);
    const std::string base = s.train.id;
    s.train.id = base + "-train";
    spec.seed = spec.seed * 0x9e3779b97f4a7c15ULL + 1;
    spec.n_per_class = n_test_per_class;
    s.test = synth_blobs(spec);
    s.test.id = base + "-test";
    return s;
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 finaliser over the combined words
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Shuffled mini-batches for one epoch; the order depends only on
/// (seed, epoch) and the final short batch is kept.
inline std::vector<Batch> batches(const Dataset& data, std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch) {
    if (batch_size == 0) {
        throw ConfigError("batch_size must be >= 1");
    }
    if (data.size() == 0) {
        throw ConfigError("dataset '" + data.id + "' is empty");
    }
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix_seed(seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<Batch> out;
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
        const std::size_t end = std::min(order.size(), begin + batch_size);
        out.push_back(data.records.select({order.begin() + static_cast<std::ptrdiff_t>(begin),
                                           order.begin() + static_cast<std::ptrdiff_t>(end)}));
    }
    return out;
}

/// Sequential, unshuffled batches (evaluation order).
inline std::vector<Batch> sequential_batches(const Dataset& data, std::size_t batch_size) {
    if (batch_size == 0) {
        throw ConfigError("batch_size must be >= 1");
    }
    if (data.size() == 0) {
        throw ConfigError("dataset '" + data.id + "' is empty");
    }
    std::vector<Batch> out;
    for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
        out.push_back(data.records.slice(begin, std::min(data.size(), begin + batch_size)));
    }
    return out;
}

}  // namespace dardkit
