#pragma once

// Dataset manifest: one entry per scene listing its files with byte sizes and
// SHA-256 digests. Digests are re-checked on load.

#include "rpge/binary_io.hpp"
#include "rpge/error.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <filesystem>
#include <string>
#include <vector>

namespace rpge::cli {

inline constexpr const char *kManifestName = "manifest.json";

inline std::string sha256_hex(const std::vector<char> &bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error(ErrorCode::Io, "SHA-256 digest failed");
    static const char *hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

struct FileEntry {
    std::string role, path; // path relative to the dataset directory
    std::size_t bytes = 0;
    std::string sha256;
};

struct SceneEntry {
    std::size_t index = 0;
    std::size_t boxes = 0, points = 0;
    std::vector<FileEntry> files;

    const FileEntry &file(const std::string &role) const {
        for (const auto &f : files)
            if (f.role == role) return f;
        throw Error(ErrorCode::Format, "scene " + std::to_string(index) + " has no '" + role + "' file");
    }
};

struct Manifest {
    nlohmann::ordered_json header; // seed, grid and generator settings
    std::vector<SceneEntry> scenes;
};

/// Writes `bytes` under `dir` and returns its manifest entry.
inline FileEntry write_tracked(const std::filesystem::path &dir, const std::string &role, const std::string &name,
                               const std::vector<char> &bytes) {
    io::write_file(dir / name, bytes);
    return {role, name, bytes.size(), sha256_hex(bytes)};
}

inline nlohmann::ordered_json manifest_json(const Manifest &m) {
    nlohmann::ordered_json j = m.header;
    auto scenes = nlohmann::ordered_json::array();
    for (const auto &s : m.scenes) {
        auto files = nlohmann::ordered_json::object();
        for (const auto &f : s.files) files[f.role] = {{"path", f.path}, {"bytes", f.bytes}, {"sha256", f.sha256}};
        scenes.push_back({{"index", s.index}, {"boxes", s.boxes}, {"points", s.points}, {"files", files}});
    }
    j["scenes"] = scenes;
    return j;
}

inline void write_manifest(const std::filesystem::path &dir, const Manifest &m) {
    const auto text = manifest_json(m).dump(2) + "\n";
    io::write_file(dir / kManifestName, std::vector<char>(text.begin(), text.end()));
}

/// Reads the manifest and verifies every listed file against its digest.
inline Manifest read_manifest(const std::filesystem::path &dir) {
    const auto path = dir / kManifestName;
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::Config, path.string() + ": manifest not found");
    const auto bytes = io::read_file(path);
    Manifest m;
    try {
        auto j = nlohmann::ordered_json::parse(bytes.begin(), bytes.end());
        for (const auto &s : j.at("scenes")) {
            SceneEntry e;
            e.index = s.at("index").get<std::size_t>();
            e.boxes = s.at("boxes").get<std::size_t>();
            e.points = s.at("points").get<std::size_t>();
            for (const auto &[role, f] : s.at("files").items())
                e.files.push_back({role, f.at("path").get<std::string>(), f.at("bytes").get<std::size_t>(),
                                   f.at("sha256").get<std::string>()});
            m.scenes.push_back(std::move(e));
        }
        j.erase("scenes");
        m.header = std::move(j);
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorCode::Format, path.string() + ": " + e.what());
    }
    for (const auto &s : m.scenes)
        for (const auto &f : s.files) {
            const auto content = io::read_file(dir / f.path);
            if (content.size() != f.bytes || sha256_hex(content) != f.sha256)
                throw Error(ErrorCode::Format, (dir / f.path).string() + ": contents do not match the manifest digest");
        }
    return m;
}

} // namespace rpge::cli
