#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcpn/io.hpp"
#include "hcpn/mask.hpp"

namespace hcpn {

struct Sequence {
    std::string name;
    std::vector<Tensor<float>> frames;    // {3,h,w}
    std::vector<FlowField> flows;         // frames - 1 exact fields (may be empty)
    std::vector<Tensor<float>> flow_rgb;  // frames - 1 colour-coded fields
    std::vector<BinaryMask> masks;        // ground truth (may be empty)
    std::vector<std::string> attributes;
    float max_mag = 1;

    std::size_t length() const { return frames.size(); }
};

struct LoadOptions {
    bool require_masks = true;
    bool verify_checksums = true;
};

// Reads one sequence directory. The manifest is parsed and checked before
// any image is decoded; problems raise FormatError.
Sequence load_sequence(const std::filesystem::path& dir, const LoadOptions& options = {});

// Sequence directories under `root`: those listed by root/index.json, else
// every child holding a manifest.json, sorted by name.
std::vector<std::filesystem::path> list_sequences(const std::filesystem::path& root);

void write_index(const std::filesystem::path& root, const std::vector<std::string>& names);

// Missing files and checksum mismatches, one message each. Empty when the
// sequence is intact.
std::vector<std::string> verify_sequence(const std::filesystem::path& dir);

}  // namespace hcpn
