#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcpn/io.hpp"
#include "hcpn/mask.hpp"
#include "hcpn/random.hpp"

namespace hcpn {

enum class ShapeKind { Square, Disc, Polygon };

std::string shape_name(ShapeKind s);
ShapeKind parse_shape(const std::string& s);

struct ObjectSpec {
    ShapeKind shape = ShapeKind::Square;
    double size = 10;  // half side, radius, or outer polygon radius (px)
    std::uint64_t texture_seed = 0;
    double x = 32, y = 32;    // centre at frame 0 (px)
    double vx = 0, vy = 0;    // displacement per frame relative to the background (px)
    bool occluder = false;    // drawn on top, never foreground
    bool is_static = false;   // moves with the background, never foreground
};

struct SceneSpec {
    std::size_t width = 64;
    std::size_t height = 64;
    std::size_t frames = 8;
    std::uint64_t background_seed = 0;
    double background_contrast = 0.25;
    double pan_x = 0, pan_y = 0;  // background displacement per frame (px)
    std::vector<ObjectSpec> objects;
    std::vector<std::string> attributes;

    // Throws SpecError, naming the object and frame when an object leaves
    // the canvas entirely.
    void validate() const;

    nlohmann::json to_json() const;
    static SceneSpec from_json(const nlohmann::json& j);
};

// In-memory rendering of a scene. Frame t has objects displaced by
// t * (v + pan); flow[t] maps frame t to t+1.
struct RenderedScene {
    std::vector<Tensor<float>> frames;  // {3,h,w} in [0,1]
    std::vector<FlowField> flows;       // frames - 1 exact fields
    std::vector<BinaryMask> masks;
};

RenderedScene render_scene(const SceneSpec& spec, std::uint64_t seed);

struct SceneOptions {
    std::size_t size = 64;
    std::size_t frames = 8;
    std::vector<std::string> attributes;  // BC, CS, FM, OC, SC
    std::size_t distractors = 0;          // static look-alikes of the foreground
};

// Random scene honouring the attribute tags.
SceneSpec random_scene(const SceneOptions& options, Rng& rng);

// Renders `spec` into `dir` (frames/, flow/, flow_rgb/, masks/) and writes
// manifest.json last. Returns the manifest.
nlohmann::json synth_generate(const SceneSpec& spec, std::uint64_t seed, const std::filesystem::path& dir);

struct DatasetOptions {
    std::size_t sequences = 1;
    SceneOptions scene;
    // Attribute mixes assigned round-robin; empty means scene.attributes.
    std::vector<std::vector<std::string>> mixes;
    std::uint64_t seed = 0;
    std::string prefix = "seq";
};

// Writes `sequences` random scenes under root/<prefix>_NNNN plus
// root/index.json. Returns the sequence names.
std::vector<std::string> synth_dataset(const DatasetOptions& options, const std::filesystem::path& root);

}  // namespace hcpn
