#pragma once

// Named flat arrays with shape metadata, and the archive format used for
// parameter checkpoints and feature pyramids.

#include "rpge/binary_io.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

namespace rpge {

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s)
        : shape(std::move(s)),
          data(std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>()), 0.0) {}

    std::size_t size() const { return data.size(); }
    friend bool operator==(const Tensor &, const Tensor &) = default;
};

/// Ordered name -> tensor map. Iteration order (by name) is the canonical
/// parameter order used by optimizers and gradient probes.
class ParameterSet {
public:
    Tensor &add(const std::string &name, std::vector<std::size_t> shape) {
        return tensors_[name] = Tensor(std::move(shape));
    }
    Tensor &operator[](const std::string &name) { return get(name); }
    const Tensor &operator[](const std::string &name) const { return get(name); }

    Tensor &get(const std::string &name) {
        auto it = tensors_.find(name);
        require(it != tensors_.end(), ErrorCode::ShapeMismatch, "missing tensor '" + name + "'");
        return it->second;
    }
    const Tensor &get(const std::string &name) const {
        auto it = tensors_.find(name);
        require(it != tensors_.end(), ErrorCode::ShapeMismatch, "missing tensor '" + name + "'");
        return it->second;
    }
    bool contains(const std::string &name) const { return tensors_.count(name) != 0; }
    void set(const std::string &name, Tensor t) { tensors_[name] = std::move(t); }

    auto begin() { return tensors_.begin(); }
    auto end() { return tensors_.end(); }
    auto begin() const { return tensors_.begin(); }
    auto end() const { return tensors_.end(); }
    std::size_t count() const { return tensors_.size(); }

    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto &[_, t] : tensors_) n += t.size();
        return n;
    }

    ParameterSet zeros_like() const {
        ParameterSet out;
        for (const auto &[name, t] : tensors_) out.add(name, t.shape);
        return out;
    }

    bool same_shapes(const ParameterSet &o) const {
        if (tensors_.size() != o.tensors_.size()) return false;
        for (auto a = tensors_.begin(), b = o.tensors_.begin(); a != tensors_.end(); ++a, ++b)
            if (a->first != b->first || a->second.shape != b->second.shape) return false;
        return true;
    }

    /// Rounds every value to the nearest 32-bit float, the precision of the
    /// archive format.
    void round_to_float() {
        for (auto &[_, t] : tensors_)
            for (double &v : t.data) v = static_cast<double>(static_cast<float>(v));
    }

    friend bool operator==(const ParameterSet &, const ParameterSet &) = default;

private:
    std::map<std::string, Tensor> tensors_;
};

struct TensorArchive {
    std::map<std::string, std::string> meta;
    ParameterSet tensors;
};

// Layout: "RPGE-TENSORS" + u32 version; u32 meta count, (string key, string
// value)*; u32 tensor count, then per tensor: string name, u32 ndim, u32 dims,
// f32 values. Strings are u32 length + bytes. All little-endian.
inline constexpr std::string_view kArchiveMagic = "RPGE-TENSORS";
inline constexpr std::uint32_t kArchiveVersion = 1;

inline std::vector<char> encode_archive(const TensorArchive &a) {
    io::ByteWriter w;
    w.bytes(kArchiveMagic);
    w.u32(kArchiveVersion);
    w.u32(static_cast<std::uint32_t>(a.meta.size()));
    for (const auto &[k, v] : a.meta) {
        w.string(k);
        w.string(v);
    }
    w.u32(static_cast<std::uint32_t>(a.tensors.count()));
    for (const auto &[name, t] : a.tensors) {
        w.string(name);
        w.u32(static_cast<std::uint32_t>(t.shape.size()));
        for (auto d : t.shape) w.u32(static_cast<std::uint32_t>(d));
        for (double v : t.data) w.f32(static_cast<float>(v));
    }
    return w.buffer();
}

inline TensorArchive decode_archive(std::vector<char> bytes, const std::string &context) {
    io::ByteReader r(std::move(bytes), context);
    if (r.bytes(kArchiveMagic.size()) != kArchiveMagic)
        throw Error(ErrorCode::Format, context + ": not a tensor archive");
    if (const auto version = r.u32(); version != kArchiveVersion)
        throw Error(ErrorCode::Format, context + ": unsupported version " + std::to_string(version));
    TensorArchive a;
    for (std::uint32_t i = 0, n = r.u32(); i < n; ++i) {
        std::string key = r.string();
        a.meta[key] = r.string();
    }
    for (std::uint32_t i = 0, n = r.u32(); i < n; ++i) {
        const std::string name = r.string();
        std::vector<std::size_t> shape(r.u32());
        for (auto &d : shape) d = r.u32();
        Tensor &t = a.tensors.add(name, shape);
        if (r.remaining() < t.size() * 4)
            throw Error(ErrorCode::Format, context + ": tensor '" + name + "' is truncated");
        for (double &v : t.data) v = r.f32();
    }
    if (r.remaining() != 0) throw Error(ErrorCode::Format, context + ": trailing bytes after last tensor");
    return a;
}

inline void write_archive(const std::filesystem::path &path, const TensorArchive &a) {
    io::write_file(path, encode_archive(a));
}

inline TensorArchive read_archive(const std::filesystem::path &path) {
    return decode_archive(io::read_file(path), path.string());
}

} // namespace rpge
