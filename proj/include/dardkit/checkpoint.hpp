#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <zlib.h>

#include <json.hpp>

#include "dardkit/error.hpp"
#include "dardkit/model.hpp"
#include "dardkit/tensor.hpp"

namespace dardkit {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace detail {

class ByteWriter {
public:
    void raw(const void* data, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(data);
        bytes_.insert(bytes_.end(), b, b + n);
    }
    void u16(std::uint16_t v) { raw(&v, sizeof v); }
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void u64(std::uint64_t v) { raw(&v, sizeof v); }
    void f32(float v) { raw(&v, sizeof v); }

    /// Appends the CRC32 of everything written so far.
    void seal() { u32(crc32_of(bytes_.data(), bytes_.size())); }

    const std::vector<unsigned char>& bytes() const { return bytes_; }

    static std::uint32_t crc32_of(const unsigned char* data, std::size_t n) {
        uLong crc = ::crc32(0L, Z_NULL, 0);
        // zlib takes uInt lengths; feed in chunks.
        while (n > 0) {
            const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1U << 30));
            crc = ::crc32(crc, data, chunk);
            data += chunk;
            n -= chunk;
        }
        return static_cast<std::uint32_t>(crc);
    }

private:
    std::vector<unsigned char> bytes_;
};

class ByteReader {
public:
    ByteReader(const unsigned char* data, std::size_t n, std::string what) : data_(data), n_(n), what_(std::move(what)) {}

    void raw(void* out, std::size_t n) {
        if (pos_ + n > n_) {
            throw IntegrityError(what_ + ": unexpected end of data at byte " + std::to_string(pos_));
        }
        std::memcpy(out, data_ + pos_, n);
        pos_ += n;
    }
    std::uint16_t u16() { std::uint16_t v; raw(&v, sizeof v); return v; }
    std::uint32_t u32() { std::uint32_t v; raw(&v, sizeof v); return v; }
    std::uint64_t u64() { std::uint64_t v; raw(&v, sizeof v); return v; }
    float f32() { float v; raw(&v, sizeof v); return v; }
    std::size_t remaining() const { return n_ - pos_; }

private:
    const unsigned char* data_;
    std::size_t n_;
    std::size_t pos_ = 0;
    std::string what_;
};

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "' for reading");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes through a sibling temp file and renames, so readers never observe a
/// partially written file.
inline void write_file_atomic(const std::filesystem::path& path, const void* data, std::size_t n) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open '" + tmp.string() + "' for writing");
        }
        out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
        if (!out) {
            throw IoError("write to '" + tmp.string() + "' failed");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
    }
}

inline void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
    write_file_atomic(path, text.data(), text.size());
}

/// Checks magic and trailing CRC; returns a reader positioned after the magic
/// and limited to the checksummed region.
inline ByteReader open_sealed(const std::vector<unsigned char>& bytes, std::string_view magic, const std::string& what) {
    if (bytes.size() < magic.size() + sizeof(std::uint32_t)) {
        throw IntegrityError(what + ": file is truncated (" + std::to_string(bytes.size()) + " bytes)");
    }
    if (std::memcmp(bytes.data(), magic.data(), magic.size()) != 0) {
        throw IntegrityError(what + ": bad magic bytes");
    }
    const std::size_t body = bytes.size() - sizeof(std::uint32_t);
    std::uint32_t stored;
    std::memcpy(&stored, bytes.data() + body, sizeof stored);
    if (ByteWriter::crc32_of(bytes.data(), body) != stored) {
        throw IntegrityError(what + ": CRC32 mismatch (file truncated or corrupt)");
    }
    return ByteReader(bytes.data() + magic.size(), body - magic.size(), what);
}

}  // namespace detail

inline constexpr std::string_view kCheckpointMagic = "DARDCKPT";
inline constexpr std::string_view kTensorMagic = "DARDTNSR";

/// Serialises a model state:
///   "DARDCKPT" | u16 version | u16 id length | id bytes | u64 count |
///   count x f32 | u32 CRC32 of all preceding bytes (little-endian).
inline std::vector<unsigned char> encode_checkpoint(const ModelState& state) {
    if (state.architecture_id.size() > 0xFFFF) {
        throw ContractViolation("architecture id is longer than 65535 bytes");
    }
    detail::ByteWriter w;
    w.raw(kCheckpointMagic.data(), kCheckpointMagic.size());
    w.u16(state.version);
    w.u16(static_cast<std::uint16_t>(state.architecture_id.size()));
    w.raw(state.architecture_id.data(), state.architecture_id.size());
    w.u64(state.parameters.size());
    for (float v : state.parameters) {
        w.f32(v);
    }
    w.seal();
    return w.bytes();
}

inline ModelState decode_checkpoint(const std::vector<unsigned char>& bytes, const std::string& what = "checkpoint") {
    auto r = detail::open_sealed(bytes, kCheckpointMagic, what);
    ModelState s;
    s.version = r.u16();
    if (s.version != kStateVersion) {
        throw IncompatibleError(what + ": format version " + std::to_string(s.version) + " is not supported (expected " +
                                std::to_string(kStateVersion) + ")");
    }
    s.architecture_id.resize(r.u16());
    r.raw(s.architecture_id.data(), s.architecture_id.size());
    const std::uint64_t count = r.u64();
    if (count * sizeof(float) != r.remaining()) {
        throw IntegrityError(what + ": header declares " + std::to_string(count) + " parameters but payload holds " +
                             std::to_string(r.remaining()) + " bytes");
    }
    s.parameters.resize(count);
    for (auto& v : s.parameters) {
        v = r.f32();
    }
    return s;
}

inline void save_checkpoint(const ModelState& state, const std::filesystem::path& path) {
    const auto bytes = encode_checkpoint(state);
    detail::write_file_atomic(path, bytes.data(), bytes.size());
}

inline ModelState load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(detail::read_file(path), "checkpoint '" + path.string() + "'");
}

/// Loads and checks the architecture tag before anything is handed back.
inline ModelState load_checkpoint(const std::filesystem::path& path, const std::string& expected_architecture) {
    ModelState s = load_checkpoint(path);
    if (s.architecture_id != expected_architecture) {
        throw IncompatibleError("checkpoint '" + path.string() + "' holds architecture '" + s.architecture_id +
                                "', expected '" + expected_architecture + "'");
    }
    return s;
}

/// Provenance stored next to a checkpoint as `<path>.meta.json`.
using CheckpointMeta = std::map<std::string, std::string>;

inline std::filesystem::path metadata_path(const std::filesystem::path& checkpoint) {
    std::filesystem::path p = checkpoint;
    p += ".meta.json";
    return p;
}

inline void save_checkpoint_metadata(const std::filesystem::path& checkpoint, const CheckpointMeta& meta) {
    nlohmann::json j = meta;
    detail::write_text_atomic(metadata_path(checkpoint), j.dump(2) + "\n");
}

inline CheckpointMeta load_checkpoint_metadata(const std::filesystem::path& checkpoint) {
    const auto bytes = detail::read_file(metadata_path(checkpoint));
    try {
        return nlohmann::json::parse(bytes.begin(), bytes.end()).get<CheckpointMeta>();
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError("metadata for '" + checkpoint.string() + "' is malformed: " + e.what());
    }
}

/// Raw tensor dump using the checkpoint payload encoding:
///   "DARDTNSR" | u16 version | u64 rows | u64 cols | rows*cols x f32 | u32 CRC32.
inline void save_tensor(const Matrix& m, const std::filesystem::path& path) {
    detail::ByteWriter w;
    w.raw(kTensorMagic.data(), kTensorMagic.size());
    w.u16(kStateVersion);
    w.u64(static_cast<std::uint64_t>(m.rows()));
    w.u64(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            w.f32(static_cast<float>(m(i, j)));
        }
    }
    w.seal();
    detail::write_file_atomic(path, w.bytes().data(), w.bytes().size());
}

inline Matrix load_tensor(const std::filesystem::path& path) {
    const auto bytes = detail::read_file(path);
    const std::string what = "tensor '" + path.string() + "'";
    auto r = detail::open_sealed(bytes, kTensorMagic, what);
    if (const auto v = r.u16(); v != kStateVersion) {
        throw IncompatibleError(what + ": format version " + std::to_string(v) + " is not supported");
    }
    const std::uint64_t rows = r.u64();
    const std::uint64_t cols = r.u64();
    if (rows * cols * sizeof(float) != r.remaining()) {
        throw IntegrityError(what + ": payload size does not match " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            m(i, j) = r.f32();
        }
    }
    return m;
}

}  // namespace dardkit
