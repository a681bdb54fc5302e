#include "hcpn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>

#include "hcpn/dataset.hpp"
#include "hcpn/flow.hpp"

namespace hcpn {
namespace {

// Smooth colour texture defined on the continuous plane, so any subpixel
// offset can be sampled exactly.
class Texture {
 public:
    Texture(std::uint64_t seed, double contrast, int waves) {
        Rng rng(seed);
        for (double& c : base_) c = rng.uniform(0.2, 0.8);
        for (int i = 0; i < waves; ++i) {
            Wave w;
            const double freq = rng.uniform(0.15, 0.9), theta = rng.uniform(0, 2 * std::numbers::pi);
            w.kx = freq * std::cos(theta);
            w.ky = freq * std::sin(theta);
            w.phase = rng.uniform(0, 2 * std::numbers::pi);
            for (double& a : w.amp) a = rng.uniform(-contrast, contrast) / std::sqrt(static_cast<double>(waves));
            waves_.push_back(w);
        }
    }

    double sample(std::size_t channel, double x, double y) const {
        double v = base_[channel];
        for (const Wave& w : waves_) v += w.amp[channel] * std::sin(w.kx * x + w.ky * y + w.phase);
        return std::clamp(v, 0.0, 1.0);
    }

 private:
    struct Wave {
        double kx = 0, ky = 0, phase = 0;
        double amp[3] = {0, 0, 0};
    };
    double base_[3] = {0, 0, 0};
    std::vector<Wave> waves_;
};

std::vector<double> polygon_radii(const ObjectSpec& o) {
    Rng rng(o.texture_seed ^ 0x9E3779B97F4A7C15ull);
    std::vector<double> r(7);
    for (double& v : r) v = o.size * rng.uniform(0.6, 1.0);
    return r;
}

// Point-in-shape test in object-local coordinates.
bool covers(const ObjectSpec& o, const std::vector<double>& radii, double dx, double dy) {
    switch (o.shape) {
        case ShapeKind::Square:
            return dx >= -o.size && dx < o.size && dy >= -o.size && dy < o.size;
        case ShapeKind::Disc:
            return dx * dx + dy * dy <= o.size * o.size;
        case ShapeKind::Polygon: {
            const std::size_t n = radii.size();
            bool in = false;
            for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
                const double ai = 2 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
                const double aj = 2 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
                const double xi = radii[i] * std::cos(ai), yi = radii[i] * std::sin(ai);
                const double xj = radii[j] * std::cos(aj), yj = radii[j] * std::sin(aj);
                if ((yi > dy) != (yj > dy) && dx < (xj - xi) * (dy - yi) / (yj - yi) + xi) in = !in;
            }
            return in;
        }
    }
    return false;
}

struct Placed {
    const ObjectSpec* spec;
    std::vector<double> radii;
    Texture texture;
    double vx, vy;  // image-space velocity
    int layer;      // 0 static, 1 foreground, 2 occluder
};

std::vector<Placed> place(const SceneSpec& spec) {
    std::vector<Placed> out;
    for (const auto& o : spec.objects) {
        const bool fg = !o.occluder && !o.is_static;
        const double vx = (o.is_static ? 0.0 : o.vx) + spec.pan_x;
        const double vy = (o.is_static ? 0.0 : o.vy) + spec.pan_y;
        out.push_back({&o, polygon_radii(o), Texture(o.texture_seed, 0.35, 3), vx, vy, o.occluder ? 2 : (fg ? 1 : 0)});
    }
    std::stable_sort(out.begin(), out.end(), [](const Placed& a, const Placed& b) { return a.layer < b.layer; });
    return out;
}

// Index into `objects` of the topmost object at pixel (x,y) of frame t, or -1.
int topmost(const std::vector<Placed>& objects, double t, double x, double y) {
    for (int i = static_cast<int>(objects.size()) - 1; i >= 0; --i) {
        const Placed& p = objects[static_cast<std::size_t>(i)];
        const double cx = p.spec->x + t * p.vx, cy = p.spec->y + t * p.vy;
        if (covers(*p.spec, p.radii, x - cx, y - cy)) return i;
    }
    return -1;
}

std::string frame_name(std::size_t t, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%05zu.%s", t, ext);
    return buf;
}

}  // namespace

std::string shape_name(ShapeKind s) {
    switch (s) {
        case ShapeKind::Square: return "square";
        case ShapeKind::Disc: return "disc";
        case ShapeKind::Polygon: return "polygon";
    }
    return "?";
}

ShapeKind parse_shape(const std::string& s) {
    if (s == "square") return ShapeKind::Square;
    if (s == "disc") return ShapeKind::Disc;
    if (s == "polygon") return ShapeKind::Polygon;
    throw SpecError("unknown shape '" + s + "'");
}

void SceneSpec::validate() const {
    if (frames < 2) throw SpecError("a scene needs at least 2 frames, got " + std::to_string(frames));
    if (width == 0 || height == 0) throw SpecError("empty canvas");
    if (objects.empty()) throw SpecError("a scene needs at least one object");
    bool any_fg = false;
    for (std::size_t i = 0; i < objects.size(); ++i) {
        const ObjectSpec& o = objects[i];
        if (!(o.size > 0)) throw SpecError("object " + std::to_string(i) + " has non-positive size");
        any_fg = any_fg || (!o.occluder && !o.is_static);
        const std::vector<double> radii = polygon_radii(o);
        const double vx = (o.is_static ? 0.0 : o.vx) + pan_x, vy = (o.is_static ? 0.0 : o.vy) + pan_y;
        for (std::size_t t = 0; t < frames; ++t) {
            const double cx = o.x + static_cast<double>(t) * vx, cy = o.y + static_cast<double>(t) * vy;
            bool visible = false;
            const auto r = static_cast<long>(std::ceil(o.size)) + 1;
            for (long y = std::max(0L, static_cast<long>(cy) - r); !visible && y <= std::min<long>(height - 1, static_cast<long>(cy) + r); ++y) {
                for (long x = std::max(0L, static_cast<long>(cx) - r); x <= std::min<long>(width - 1, static_cast<long>(cx) + r); ++x) {
                    if (covers(o, radii, static_cast<double>(x) - cx, static_cast<double>(y) - cy)) {
                        visible = true;
                        break;
                    }
                }
            }
            if (!visible) {
                throw SpecError("object " + std::to_string(i) + " leaves the frame entirely at frame " +
                                std::to_string(t));
            }
        }
    }
    if (!any_fg) throw SpecError("a scene needs at least one moving foreground object");
}

nlohmann::json SceneSpec::to_json() const {
    nlohmann::json objs = nlohmann::json::array();
    for (const auto& o : objects) {
        objs.push_back({{"shape", shape_name(o.shape)}, {"size", o.size}, {"texture_seed", o.texture_seed},
                        {"x", o.x}, {"y", o.y}, {"vx", o.vx}, {"vy", o.vy}, {"occluder", o.occluder},
                        {"static", o.is_static}});
    }
    return {{"width", width}, {"height", height}, {"frames", frames}, {"background_seed", background_seed},
            {"background_contrast", background_contrast}, {"pan_x", pan_x}, {"pan_y", pan_y},
            {"objects", objs}, {"attributes", attributes}};
}

SceneSpec SceneSpec::from_json(const nlohmann::json& j) {
    SceneSpec s;
    try {
        s.width = j.at("width");
        s.height = j.at("height");
        s.frames = j.at("frames");
        s.background_seed = j.at("background_seed");
        s.background_contrast = j.value("background_contrast", s.background_contrast);
        s.pan_x = j.value("pan_x", 0.0);
        s.pan_y = j.value("pan_y", 0.0);
        s.attributes = j.value("attributes", std::vector<std::string>{});
        for (const auto& o : j.at("objects")) {
            ObjectSpec os;
            os.shape = parse_shape(o.at("shape"));
            os.size = o.at("size");
            os.texture_seed = o.at("texture_seed");
            os.x = o.at("x");
            os.y = o.at("y");
            os.vx = o.value("vx", 0.0);
            os.vy = o.value("vy", 0.0);
            os.occluder = o.value("occluder", false);
            os.is_static = o.value("static", false);
            s.objects.push_back(os);
        }
    } catch (const nlohmann::json::exception& e) {
        throw SpecError(std::string("scene spec: ") + e.what());
    }
    return s;
}

RenderedScene render_scene(const SceneSpec& spec, std::uint64_t seed) {
    spec.validate();
    const std::vector<Placed> objects = place(spec);
    const Texture background(spec.background_seed, spec.background_contrast, 6);
    const std::size_t h = spec.height, w = spec.width, plane = h * w;
    Rng noise(seed);

    RenderedScene out;
    for (std::size_t t = 0; t < spec.frames; ++t) {
        const double td = static_cast<double>(t);
        std::vector<float> img(3 * plane);
        BinaryMask mask(h, w);
        FlowField flow(h, w);
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                const double px = static_cast<double>(x), py = static_cast<double>(y);
                const int top = topmost(objects, td, px, py);
                const std::size_t i = y * w + x;
                double vx = spec.pan_x, vy = spec.pan_y;
                for (std::size_t c = 0; c < 3; ++c) {
                    double val;
                    if (top < 0) {
                        val = background.sample(c, px - td * spec.pan_x, py - td * spec.pan_y);
                    } else {
                        const Placed& p = objects[static_cast<std::size_t>(top)];
                        val = p.texture.sample(c, px - (p.spec->x + td * p.vx), py - (p.spec->y + td * p.vy));
                    }
                    val += 0.01 * noise.normal();
                    img[c * plane + i] = static_cast<float>(std::clamp(val, 0.0, 1.0));
                }
                if (top >= 0) {
                    const Placed& p = objects[static_cast<std::size_t>(top)];
                    vx = p.vx;
                    vy = p.vy;
                    if (p.layer == 1) mask.at(y, x) = 1;
                }
                flow.u(y, x) = static_cast<float>(vx);
                flow.v(y, x) = static_cast<float>(vy);
            }
        }
        out.frames.emplace_back(Shape{3, h, w}, std::move(img));
        out.masks.push_back(std::move(mask));
        if (t + 1 < spec.frames) out.flows.push_back(std::move(flow));
    }
    return out;
}

SceneSpec random_scene(const SceneOptions& options, Rng& rng) {
    static const std::set<std::string> known{"BC", "CS", "FM", "OC", "SC"};
    for (const auto& a : options.attributes) {
        if (!known.contains(a)) throw SpecError("unknown attribute '" + a + "' (expected BC, CS, FM, OC or SC)");
    }
    auto has = [&](const char* tag) {
        return std::find(options.attributes.begin(), options.attributes.end(), tag) != options.attributes.end();
    };
    SceneSpec s;
    s.width = s.height = options.size;
    s.frames = options.frames;
    s.attributes = options.attributes;
    s.background_seed = rng.next();
    s.background_contrast = has("BC") ? 0.45 : 0.25;
    const double scale = static_cast<double>(options.size) / 64.0;
    if (has("CS")) {
        do {
            s.pan_x = static_cast<double>(rng.below(3)) - 1;
            s.pan_y = static_cast<double>(rng.below(3)) - 1;
        } while (s.pan_x == 0 && s.pan_y == 0);
    }

    const double steps = static_cast<double>(options.frames - 1);
    auto random_velocity = [&](double lo, double hi) {
        for (;;) {
            const double vx = std::round(rng.uniform(-hi, hi)), vy = std::round(rng.uniform(-hi, hi));
            const double m = std::max(std::abs(vx), std::abs(vy));
            if (m >= lo && m <= hi) return std::pair{vx, vy};
        }
    };
    // Keeps the whole trajectory inside the canvas when possible.
    auto random_start = [&](double size, double vx, double vy) {
        auto axis = [&](double v) {
            const double lo = size + std::max(0.0, -v * steps), hi = options.size - size - std::max(0.0, v * steps);
            return hi > lo ? std::round(rng.uniform(lo, hi)) : std::round(options.size / 2.0 - v * steps / 2);
        };
        const double x = axis(vx);
        return std::pair{x, axis(vy)};
    };

    ObjectSpec fg;
    fg.shape = has("SC") ? ShapeKind::Polygon : (rng.below(2) == 0 ? ShapeKind::Square : ShapeKind::Disc);
    fg.size = std::round(rng.uniform(8, 11) * scale);
    fg.texture_seed = rng.next();
    const auto [vx, vy] = has("FM") ? random_velocity(3, 4) : random_velocity(1, 2);
    fg.vx = vx;
    fg.vy = vy;
    const auto [x0, y0] = random_start(fg.size, vx + s.pan_x, vy + s.pan_y);
    fg.x = x0;
    fg.y = y0;

    for (std::size_t d = 0; d < options.distractors; ++d) {
        ObjectSpec o = fg;
        o.is_static = true;
        o.vx = o.vy = 0;
        o.size = std::round(fg.size * rng.uniform(0.7, 1.0));
        const auto [sx, sy] = random_start(o.size, s.pan_x, s.pan_y);
        o.x = sx;
        o.y = sy;
        s.objects.push_back(o);
    }
    s.objects.push_back(fg);

    if (has("OC")) {
        ObjectSpec oc;
        oc.occluder = true;
        oc.shape = ShapeKind::Square;
        oc.size = std::round(5 * scale);
        oc.texture_seed = rng.next();
        // Crosses the foreground path around the middle of the clip.
        const double mid = steps / 2;
        oc.vx = -fg.vx;
        oc.vy = -fg.vy;
        oc.x = fg.x + mid * fg.vx - mid * oc.vx;
        oc.y = fg.y + mid * fg.vy - mid * oc.vy;
        s.objects.push_back(oc);
    }
    s.validate();
    return s;
}

nlohmann::json synth_generate(const SceneSpec& spec, std::uint64_t seed, const std::filesystem::path& dir) {
    const RenderedScene scene = render_scene(spec, seed);
    std::filesystem::create_directories(dir);
    std::filesystem::remove(dir / "manifest.json");

    float max_mag = 0;
    {
        FlowField all(spec.height * scene.flows.size(), spec.width);
        for (std::size_t t = 0; t < scene.flows.size(); ++t) {
            std::copy(scene.flows[t].uv.begin(), scene.flows[t].uv.end(),
                      all.uv.begin() + static_cast<std::ptrdiff_t>(t * scene.flows[t].uv.size()));
        }
        max_mag = flow_scale(all);
    }

    nlohmann::json files = nlohmann::json::object();
    auto emit = [&](const std::string& rel, const std::string& bytes) {
        write_file(dir / rel, bytes);
        files[rel] = sha256_hex(bytes);
    };
    for (std::size_t t = 0; t < spec.frames; ++t) {
        emit("frames/" + frame_name(t, "ppm"), encode_ppm(scene.frames[t]));
        emit("masks/" + frame_name(t, "pgm"), encode_pgm(scene.masks[t]));
        if (t + 1 < spec.frames) {
            emit("flow/" + frame_name(t, "flo"), encode_flo(scene.flows[t]));
            emit("flow_rgb/" + frame_name(t, "ppm"), encode_ppm(encode_flow(scene.flows[t], max_mag)));
        }
    }
    nlohmann::json manifest = {{"seed", seed},       {"spec", spec.to_json()}, {"attributes", spec.attributes},
                               {"max_mag", max_mag}, {"frames", spec.frames},  {"files", files}};
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    return manifest;
}

std::vector<std::string> synth_dataset(const DatasetOptions& options, const std::filesystem::path& root) {
    if (options.sequences == 0) throw SpecError("dataset needs at least one sequence");
    std::vector<std::string> names;
    for (std::size_t i = 0; i < options.sequences; ++i) {
        SceneOptions scene = options.scene;
        if (!options.mixes.empty()) scene.attributes = options.mixes[i % options.mixes.size()];
        const std::uint64_t seed = derive_seed(options.seed, i);
        Rng rng(seed);
        const SceneSpec spec = random_scene(scene, rng);
        char name[32];
        std::snprintf(name, sizeof name, "_%04zu", i);
        names.push_back(options.prefix + name);
        synth_generate(spec, seed, root / names.back());
    }
    write_index(root, names);
    return names;
}

}  // namespace hcpn
