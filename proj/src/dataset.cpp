#include "hcpn/dataset.hpp"

#include <algorithm>
#include <cstdio>

namespace hcpn {
namespace {

std::string numbered(std::size_t t, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%05zu.%s", t, ext);
    return buf;
}

nlohmann::json read_manifest(const std::filesystem::path& dir) {
    const auto path = dir / "manifest.json";
    if (!std::filesystem::exists(path)) throw FormatError("missing manifest " + path.string());
    try {
        nlohmann::json m = nlohmann::json::parse(read_file(path));
        if (!m.contains("frames") || !m.at("frames").is_number_unsigned() || !m.contains("files") ||
            !m.at("files").is_object()) {
            throw FormatError("manifest " + path.string() + " lacks frames/files");
        }
        if (m.at("frames").get<std::size_t>() < 2) throw FormatError("manifest " + path.string() + " has < 2 frames");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("corrupt manifest " + path.string() + ": " + e.what());
    }
}

// Bytes of `rel`, checked against the manifest digest when requested.
std::string load_checked(const std::filesystem::path& dir, const std::string& rel, const nlohmann::json& files,
                         bool verify, const char* kind) {
    const auto path = dir / rel;
    if (!std::filesystem::exists(path)) throw FormatError(std::string("missing ") + kind + " file " + path.string());
    std::string bytes = read_file(path);
    if (verify && files.contains(rel) && files.at(rel).get<std::string>() != sha256_hex(bytes)) {
        throw FormatError("checksum mismatch for " + path.string());
    }
    return bytes;
}

}  // namespace

Sequence load_sequence(const std::filesystem::path& dir, const LoadOptions& options) {
    const nlohmann::json m = read_manifest(dir);
    const auto& files = m.at("files");
    const std::size_t n = m.at("frames");

    Sequence s;
    s.name = dir.filename().string();
    if (s.name.empty()) s.name = dir.parent_path().filename().string();
    s.attributes = m.value("attributes", std::vector<std::string>{});
    s.max_mag = m.value("max_mag", 1.0f);

    for (std::size_t t = 0; t < n; ++t) {
        s.frames.push_back(decode_ppm(load_checked(dir, "frames/" + numbered(t, "ppm"), files, options.verify_checksums, "frame")));
        if (options.require_masks || std::filesystem::exists(dir / "masks" / numbered(t, "pgm"))) {
            s.masks.push_back(decode_pgm(load_checked(dir, "masks/" + numbered(t, "pgm"), files, options.verify_checksums, "mask")));
        }
        if (t + 1 < n) {
            s.flow_rgb.push_back(decode_ppm(load_checked(dir, "flow_rgb/" + numbered(t, "ppm"), files, options.verify_checksums, "flow")));
            s.flows.push_back(decode_flo(load_checked(dir, "flow/" + numbered(t, "flo"), files, options.verify_checksums, "flow")));
        }
    }
    if (!s.masks.empty() && s.masks.size() != n) throw FormatError("sequence " + s.name + " has masks for only some frames");
    for (std::size_t t = 0; t < n; ++t) {
        if (s.frames[t].shape() != s.frames[0].shape()) throw FormatError("frame " + std::to_string(t) + " of " + s.name + " changes size");
    }
    return s;
}

std::vector<std::filesystem::path> list_sequences(const std::filesystem::path& root) {
    std::vector<std::filesystem::path> out;
    const auto index = root / "index.json";
    if (std::filesystem::exists(index)) {
        try {
            const nlohmann::json j = nlohmann::json::parse(read_file(index));
            for (const auto& name : j.at("sequences")) out.push_back(root / name.get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("corrupt index " + index.string() + ": " + e.what());
        }
        return out;
    }
    if (!std::filesystem::is_directory(root)) throw IoError("not a directory: " + root.string());
    if (std::filesystem::exists(root / "manifest.json")) return {root};
    for (const auto& e : std::filesystem::directory_iterator(root)) {
        if (e.is_directory() && std::filesystem::exists(e.path() / "manifest.json")) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

void write_index(const std::filesystem::path& root, const std::vector<std::string>& names) {
    write_file(root / "index.json", nlohmann::json{{"sequences", names}}.dump(2) + "\n");
}

std::vector<std::string> verify_sequence(const std::filesystem::path& dir) {
    std::vector<std::string> problems;
    nlohmann::json m;
    try {
        m = read_manifest(dir);
    } catch (const Error& e) {
        return {e.what()};
    }
    const std::size_t n = m.at("frames");
    std::vector<std::string> expected;
    for (std::size_t t = 0; t < n; ++t) {
        expected.push_back("frames/" + numbered(t, "ppm"));
        expected.push_back("masks/" + numbered(t, "pgm"));
        if (t + 1 < n) {
            expected.push_back("flow/" + numbered(t, "flo"));
            expected.push_back("flow_rgb/" + numbered(t, "ppm"));
        }
    }
    const auto& files = m.at("files");
    for (const auto& rel : expected) {
        if (!files.contains(rel)) problems.push_back(rel + ": not listed in manifest");
    }
    for (const auto& [rel, digest] : files.items()) {
        const auto path = dir / rel;
        if (!std::filesystem::exists(path)) {
            problems.push_back(rel + ": missing");
        } else if (sha256_hex(read_file(path)) != digest.get<std::string>()) {
            problems.push_back(rel + ": checksum mismatch");
        }
    }
    return problems;
}

}  // namespace hcpn
