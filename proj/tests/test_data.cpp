#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "dardkit/data.hpp"

namespace dk = dardkit;
namespace fs = std::filesystem;

namespace {

std::vector<unsigned char> random_cifar_bytes(std::size_t n, dk::CifarKind kind, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<unsigned char> out;
    for (std::size_t i = 0; i < n; ++i) {
        if (kind == dk::CifarKind::cifar100) {
            out.push_back(static_cast<unsigned char>(rng() % 20));
            out.push_back(static_cast<unsigned char>(rng() % 100));
        } else {
            out.push_back(static_cast<unsigned char>(rng() % 10));
        }
        for (std::size_t j = 0; j < dk::kCifarPixels; ++j) {
            out.push_back(static_cast<unsigned char>(rng() & 0xff));
        }
    }
    return out;
}

}  // namespace

TEST(Cifar, RecordSizes) {
    EXPECT_EQ(dk::cifar_record_size(dk::CifarKind::cifar10), 3073u);
    EXPECT_EQ(dk::cifar_record_size(dk::CifarKind::cifar100), 3074u);
}

TEST(Cifar, TenRecordFile) {
    const auto bytes = random_cifar_bytes(10, dk::CifarKind::cifar10, 1);
    ASSERT_EQ(bytes.size(), 30730u);
    const auto f = dk::parse_cifar_bytes(bytes, dk::CifarKind::cifar10);
    EXPECT_EQ(f.size(), 10u);
    const auto d = dk::to_dataset(f, "c10");
    EXPECT_EQ(d.num_classes, 10u);
    EXPECT_EQ(d.input_shape(), (dk::Shape{3, 32, 32}));
    EXPECT_NO_THROW(d.records.validate(10));
}

TEST(Cifar, ChannelPlanarScaling) {
    auto bytes = random_cifar_bytes(2, dk::CifarKind::cifar10, 2);
    const auto d = dk::to_dataset(dk::parse_cifar_bytes(bytes, dk::CifarKind::cifar10), "c10");
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t j : {std::size_t{0}, std::size_t{1023}, std::size_t{1024}, std::size_t{3071}}) {
            EXPECT_EQ(d.records.inputs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)),
                      bytes[r * 3073 + 1 + j] / 255.0);
        }
        EXPECT_EQ(d.records.labels[r], bytes[r * 3073]);
    }
}

TEST(Cifar, HundredKeepsFineLabel) {
    std::vector<unsigned char> bytes(2 * 3074, 0);
    bytes[0] = 7;
    bytes[1] = 93;
    bytes[3074] = 19;
    bytes[3075] = 4;
    const auto f = dk::parse_cifar_bytes(bytes, dk::CifarKind::cifar100);
    const auto d = dk::to_dataset(f, "c100");
    EXPECT_EQ(d.num_classes, 100u);
    EXPECT_EQ(d.records.labels, (std::vector<int>{93, 4}));
}

TEST(Cifar, ZeroPixelsAreZero) {
    std::vector<unsigned char> bytes(3073, 0);
    bytes[0] = 3;
    const auto d = dk::to_dataset(dk::parse_cifar_bytes(bytes, dk::CifarKind::cifar10), "z");
    EXPECT_EQ(d.records.inputs.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Cifar, WrongSizeIsFormatError) {
    const std::vector<unsigned char> bytes(3073 * 2 + 5, 0);
    try {
        dk::parse_cifar_bytes(bytes, dk::CifarKind::cifar10);
        FAIL() << "expected FormatError";
    } catch (const dk::FormatError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("6151"), std::string::npos) << msg;
        EXPECT_NE(msg.find("6146"), std::string::npos) << msg;
    }
    EXPECT_THROW(dk::parse_cifar_bytes({}, dk::CifarKind::cifar10), dk::FormatError);
}

TEST(Cifar, BadLabelNamesRecord) {
    auto bytes = random_cifar_bytes(5, dk::CifarKind::cifar10, 3);
    bytes[3 * 3073] = 10;
    try {
        dk::parse_cifar_bytes(bytes, dk::CifarKind::cifar10);
        FAIL() << "expected DataError";
    } catch (const dk::DataError& e) {
        EXPECT_NE(std::string(e.what()).find("record 3"), std::string::npos) << e.what();
    }
    auto b100 = random_cifar_bytes(2, dk::CifarKind::cifar100, 3);
    b100[1] = 100;
    EXPECT_THROW(dk::parse_cifar_bytes(b100, dk::CifarKind::cifar100), dk::DataError);
}

TEST(Cifar, ReserializationIsLossless) {
    for (auto kind : {dk::CifarKind::cifar10, dk::CifarKind::cifar100}) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto bytes = random_cifar_bytes(1 + seed * 3, kind, seed);
            EXPECT_EQ(dk::serialize_cifar(dk::parse_cifar_bytes(bytes, kind)), bytes);
        }
    }
}

TEST(Cifar, LoadConcatenatesFiles) {
    const fs::path dir = fs::temp_directory_path() / "dardkit-cifar-test";
    fs::create_directories(dir);
    std::vector<fs::path> files;
    for (int i = 0; i < 2; ++i) {
        const auto bytes = random_cifar_bytes(3, dk::CifarKind::cifar10, 10 + i);
        files.push_back(dir / ("data_batch_" + std::to_string(i + 1) + ".bin"));
        std::ofstream(files.back(), std::ios::binary)
            .write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    const auto d = dk::load_cifar(files, dk::CifarKind::cifar10, "c10");
    EXPECT_EQ(d.size(), 6u);
    fs::remove_all(dir);
    EXPECT_THROW(dk::load_cifar({}, dk::CifarKind::cifar10, "x"), dk::ConfigError);
}

TEST(Blobs, Deterministic) {
    dk::BlobsSpec s;
    s.seed = 42;
    s.n_per_class = 20;
    const auto a = dk::synth_blobs(s);
    const auto b = dk::synth_blobs(s);
    EXPECT_TRUE(a.records.inputs == b.records.inputs);
    EXPECT_EQ(a.records.labels, b.records.labels);
    s.seed = 43;
    EXPECT_FALSE(dk::synth_blobs(s).records.inputs == a.records.inputs);
}

TEST(Blobs, InUnitBoxAndBalanced) {
    dk::BlobsSpec s;
    s.seed = 1;
    s.spread = 2.0;  // wide enough to hit the clamp
    const auto d = dk::synth_blobs(s);
    EXPECT_NO_THROW(d.records.validate(10));
    std::map<int, int> hist;
    for (int y : d.records.labels) {
        ++hist[y];
    }
    ASSERT_EQ(hist.size(), 10u);
    for (const auto& [k, n] : hist) {
        EXPECT_EQ(n, 200) << k;
    }
}

TEST(Blobs, VanishingSpreadGivesCenters) {
    dk::BlobsSpec s;
    s.seed = 5;
    s.n_per_class = 3;
    s.spread = 1e-12;
    const auto d = dk::synth_blobs(s);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto c = dk::blob_center(s, static_cast<std::size_t>(d.records.labels[i]));
        EXPECT_LT((d.records.inputs.row(static_cast<Eigen::Index>(i)).transpose() - c).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Blobs, CentersUseScaledOneHot) {
    dk::BlobsSpec s;
    const auto c = dk::blob_center(s, 3);
    for (Eigen::Index j = 0; j < 10; ++j) {
        EXPECT_EQ(c[j], j == 3 ? 0.8 : 0.2);
    }
    for (Eigen::Index j = 10; j < 32; ++j) {
        EXPECT_NEAR(std::abs(c[j] - 0.5), s.signature, 1e-15);
    }
}

TEST(Blobs, ConfigErrors) {
    EXPECT_THROW(dk::synth_blobs(1, 10, 8, 5, 0.3), dk::ConfigError);
    EXPECT_THROW(dk::synth_blobs(1, 1, 8, 5, 0.3), dk::ConfigError);
    EXPECT_THROW(dk::synth_blobs(1, 3, 8, 5, 0.0), dk::ConfigError);
}

TEST(Blobs, SplitUsesIndependentStreams) {
    dk::BlobsSpec s;
    s.seed = 9;
    const auto split = dk::blobs_split(s, 20, 10);
    EXPECT_EQ(split.train.size(), 200u);
    EXPECT_EQ(split.test.size(), 100u);
    EXPECT_NE(split.train.id, split.test.id);
    EXPECT_FALSE(split.train.records.inputs.topRows(100) == split.test.records.inputs);
}

TEST(Batches, LargeBatchIsWholeDataset) {
    const auto d = dk::synth_blobs(3, 4, 6, 5, 0.3);
    const auto bs = dk::batches(d, 1000, 1, 1);
    ASSERT_EQ(bs.size(), 1u);
    EXPECT_EQ(bs[0].size(), d.size());
}

TEST(Batches, DeterministicPerSeedAndEpoch) {
    const auto d = dk::synth_blobs(3, 4, 6, 25, 0.3);
    const auto a = dk::batches(d, 16, 7, 2);
    const auto b = dk::batches(d, 16, 7, 2);
    const auto c = dk::batches(d, 16, 7, 3);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_TRUE(a[i].inputs == b[i].inputs);
    }
    EXPECT_FALSE(a[0].inputs == c[0].inputs);
}

TEST(Batches, EpochIsAPermutation) {
    const auto d = dk::synth_blobs(3, 5, 7, 19, 0.3);  // 95 records
    for (std::size_t bs : {1u, 7u, 10u, 95u, 200u}) {
        const auto out = dk::batches(d, bs, 11, 4);
        std::multiset<int> labels;
        std::set<std::vector<double>> rows;
        std::size_t total = 0;
        for (std::size_t i = 0; i < out.size(); ++i) {
            EXPECT_TRUE(i + 1 == out.size() || out[i].size() == bs);
            EXPECT_NO_THROW(out[i].validate(5));
            total += out[i].size();
            labels.insert(out[i].labels.begin(), out[i].labels.end());
            for (Eigen::Index r = 0; r < out[i].inputs.rows(); ++r) {
                const auto row = out[i].inputs.row(r);
                rows.insert(std::vector<double>(row.data(), row.data() + row.size()));
            }
        }
        EXPECT_EQ(total, d.size());
        EXPECT_EQ(rows.size(), d.size());  // every record exactly once
        EXPECT_EQ(labels, std::multiset<int>(d.records.labels.begin(), d.records.labels.end()));
    }
}

TEST(Batches, Errors) {
    const auto d = dk::synth_blobs(3, 4, 6, 5, 0.3);
    EXPECT_THROW(dk::batches(d, 0, 1, 1), dk::ConfigError);
    dk::Dataset empty;
    empty.id = "empty";
    EXPECT_THROW(dk::batches(empty, 4, 1, 1), dk::ConfigError);
}

TEST(BatchInvariant, DetectsViolations) {
    dk::Batch b;
    b.inputs = dk::Matrix::Constant(2, 3, 0.5);
    b.labels = {0, 1};
    b.shape = {3};
    EXPECT_NO_THROW(b.validate(2));
    b.inputs(1, 2) = 1.5;
    EXPECT_THROW(b.validate(2), dk::DataError);
    b.inputs(1, 2) = 0.5;
    b.labels = {0, 2};
    EXPECT_THROW(b.validate(2), dk::DataError);
    b.labels = {0};
    EXPECT_THROW(b.validate(2), dk::DataError);
}
