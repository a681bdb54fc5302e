#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "hcpn/dataset.hpp"
#include "hcpn/flow.hpp"
#include "hcpn/io.hpp"
#include "hcpn/synth.hpp"
#include "oracles.hpp"

using namespace hcpn;
using namespace hcpn::oracle;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
    TempDir() {
        path_ = fs::temp_directory_path() /
                ("hcpn_test_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

 private:
    fs::path path_;
};

SceneSpec one_square(double vx, double vy) {
    SceneSpec spec;
    spec.frames = 6;
    spec.background_seed = 3;
    ObjectSpec o;
    o.size = 6;
    o.texture_seed = 11;
    o.x = 20;
    o.y = 30;
    o.vx = vx;
    o.vy = vy;
    spec.objects.push_back(o);
    return spec;
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path());
    }
    return out;
}

}  // namespace

// ---- file formats ---------------------------------------------------------------

TEST(Flo, TwoByOneByteOracle) {
    FlowField f(1, 2);
    f.u(0, 0) = 1;
    f.v(0, 0) = 0;
    f.u(0, 1) = 0;
    f.v(0, 1) = -1;
    const std::string bytes = encode_flo(f);
    // "PIEH", width 2, height 1, then u0 v0 u1 v1.
    const std::string want = std::string("PIEH") + le32(2) + le32(1) + le32(std::bit_cast<std::uint32_t>(1.0f)) +
                             le32(0) + le32(0) + le32(std::bit_cast<std::uint32_t>(-1.0f));
    ASSERT_EQ(bytes.size(), 28u);
    EXPECT_EQ(bytes, want);
    EXPECT_EQ(decode_flo(bytes), f);
}

TEST(Flo, RejectsBadMagicAndTruncation) {
    FlowField f(2, 2);
    std::string bytes = encode_flo(f);
    std::string bad = bytes;
    bad[0] = 'X';
    try {
        decode_flo(bad);
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), 0u);
    }
    EXPECT_THROW(decode_flo(bytes.substr(0, bytes.size() - 3)), FormatError);
    EXPECT_THROW(decode_flo(bytes.substr(0, 10)), FormatError);
}

TEST(Netpbm, RoundTrips) {
    Rng rng(1);
    std::vector<float> px(3 * 5 * 7);
    for (float& v : px) v = static_cast<float>(rng.below(256)) / 255.0f;
    const Tensor<float> img({3, 5, 7}, px);
    const Tensor<float> back = decode_ppm(encode_ppm(img));
    ASSERT_EQ(back.shape(), img.shape());
    for (std::size_t i = 0; i < px.size(); ++i) EXPECT_FLOAT_EQ(back[i], img[i]);
    EXPECT_EQ(encode_ppm(back), encode_ppm(img));

    BinaryMask m(4, 9);
    for (auto& b : m.data) b = rng.below(2);
    EXPECT_EQ(decode_pgm(encode_pgm(m)), m);

    std::vector<float> probs(3 * 4);
    for (float& v : probs) v = static_cast<float>(rng.below(65536)) / 65535.0f;
    const Tensor<float> map({1, 3, 4}, probs);
    const Tensor<float> map_back = decode_pgm16(encode_pgm16(map));
    for (std::size_t i = 0; i < probs.size(); ++i) EXPECT_FLOAT_EQ(map_back[i], map[i]);
}

TEST(Netpbm, MalformedInputs) {
    EXPECT_THROW(decode_ppm("P5\n2 2\n255\n...."), FormatError);
    EXPECT_THROW(decode_ppm("P6\n2 2\n255\n12"), FormatError);
    EXPECT_THROW(decode_pgm("P5\n2\n"), FormatError);
}

TEST(Sha256, KnownDigest) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

// ---- flow colour coding ----------------------------------------------------------------

TEST(FlowCodec, ZeroFieldIsWhite) {
    const Tensor<float> rgb = encode_flow(FlowField(3, 4), 2.0f);
    for (float v : rgb.values()) EXPECT_EQ(v, 1.0f);
    EXPECT_EQ(color_wheel().size(), 55u);
}

TEST(FlowCodec, RoundTripWithinQuantisationBound) {
    const float max_mag = 5.0f;
    const int n = 41;
    FlowField f(n, n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            const float u = max_mag * (2.0f * static_cast<float>(x) / (n - 1) - 1.0f);
            const float v = max_mag * (2.0f * static_cast<float>(y) / (n - 1) - 1.0f);
            const float mag = std::hypot(u, v);
            const float s = mag > max_mag ? max_mag / mag : 1.0f;
            f.u(y, x) = u * s;
            f.v(y, x) = v * s;
        }
    // Quantise to 8 bits exactly as a stored PPM would.
    const Tensor<float> rgb = decode_ppm(encode_ppm(encode_flow(f, max_mag)));
    const FlowField back = decode_flow(rgb, max_mag);
    const double bound = max_mag * (2.0 / 255.0) * std::sqrt(2.0);
    double worst = 0;
    for (std::size_t i = 0; i < f.uv.size(); ++i) worst = std::max(worst, std::abs(double(back.uv[i]) - f.uv[i]));
    EXPECT_LE(worst, bound);
}

TEST(FlowCodec, FullMagnitudeIsSaturated) {
    FlowField f(1, 1);
    f.u(0, 0) = 3.0f;
    const Tensor<float> rgb = encode_flow(f, 3.0f);
    const float lo = std::min({rgb[0], rgb[1], rgb[2]});
    EXPECT_NEAR(lo, 0.0f, 1e-6);
    const Tensor<float> beyond = encode_flow(FlowField(f), 1.5f);
    EXPECT_NEAR(std::min({beyond[0], beyond[1], beyond[2]}), 0.0f, 1e-6);
}

TEST(FlowCodec, ScaleIsNinetyNinthPercentile) {
    FlowField f(10, 10);
    for (std::size_t i = 0; i < 100; ++i) f.uv[2 * i] = static_cast<float>(i + 1);
    EXPECT_NEAR(flow_scale(f), 99.0f, 1.0f);
    EXPECT_EQ(flow_scale(FlowField(4, 4)), 1.0f);
}

TEST(WarpMask, TranslatesAndDropsOutside) {
    BinaryMask m(5, 5);
    m.at(1, 1) = m.at(1, 4) = 1;
    FlowField f(5, 5);
    for (std::size_t i = 0; i < 25; ++i) f.uv[2 * i] = 1.4f;
    const BinaryMask w = warp_mask(m, f);
    EXPECT_EQ(w.count(), 1u);
    EXPECT_EQ(w.at(1, 2), 1);
}

// ---- synthesis --------------------------------------------------------------------------

TEST(Synth, FlowAuditMatchesVelocity) {
    const RenderedScene r = render_scene(one_square(2, 0), 5);
    ASSERT_EQ(r.flows.size(), r.frames.size() - 1);
    for (std::size_t t = 0; t + 1 < r.frames.size(); ++t) {
        const BinaryMask& m = r.masks[t];
        ASSERT_FALSE(m.empty());
        for (std::size_t y = 0; y < m.height; ++y)
            for (std::size_t x = 0; x < m.width; ++x) {
                if (!m.at(y, x)) continue;
                ASSERT_EQ(r.flows[t].u(y, x), 2.0f);
                ASSERT_EQ(r.flows[t].v(y, x), 0.0f);
            }
    }
}

TEST(Synth, PanAddsToForegroundFlow) {
    SceneSpec spec = one_square(1, 0);
    spec.pan_x = -1;
    spec.pan_y = 1;
    const RenderedScene r = render_scene(spec, 6);
    const BinaryMask& m = r.masks[0];
    for (std::size_t y = 0; y < m.height; ++y)
        for (std::size_t x = 0; x < m.width; ++x) {
            if (m.at(y, x)) {
                EXPECT_EQ(r.flows[0].u(y, x), 0.0f);
                EXPECT_EQ(r.flows[0].v(y, x), 1.0f);
            } else {
                EXPECT_EQ(r.flows[0].u(y, x), -1.0f);
            }
        }
}

TEST(Synth, WarpReproducesNextMaskForIntegerMotion) {
    const RenderedScene r = render_scene(one_square(2, -1), 7);
    for (std::size_t t = 0; t + 1 < r.masks.size(); ++t) EXPECT_EQ(warp_mask(r.masks[t], r.flows[t]), r.masks[t + 1]);
}

TEST(Synth, OccluderRemovesForeground) {
    SceneSpec spec = one_square(0, 0);
    ObjectSpec occ;
    occ.size = 4;
    occ.texture_seed = 2;
    occ.x = 20;
    occ.y = 30;
    occ.occluder = true;
    spec.objects.push_back(occ);
    spec.objects[0].vx = 1;
    const RenderedScene r = render_scene(spec, 8);
    const RenderedScene bare = render_scene(one_square(1, 0), 8);
    EXPECT_LT(r.masks[0].count(), bare.masks[0].count());
    EXPECT_EQ(r.masks[0].at(30, 20), 0);
}

TEST(Synth, SpecErrorsNameObjectAndFrame) {
    SceneSpec spec = one_square(8, 0);
    spec.frames = 12;
    try {
        spec.validate();
        FAIL() << "expected SpecError";
    } catch (const SpecError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("object 0"), std::string::npos) << what;
        EXPECT_NE(what.find("frame"), std::string::npos) << what;
    }
    SceneSpec one = one_square(1, 0);
    one.frames = 1;
    EXPECT_THROW(one.validate(), SpecError);
}

TEST(Synth, SpecJsonRoundTrip) {
    Rng rng(9);
    SceneOptions opt;
    opt.attributes = {"OC", "SC", "CS"};
    opt.distractors = 2;
    const SceneSpec spec = random_scene(opt, rng);
    EXPECT_EQ(SceneSpec::from_json(spec.to_json()).to_json(), spec.to_json());
    EXPECT_NO_THROW(spec.validate());
    EXPECT_TRUE(spec.pan_x != 0 || spec.pan_y != 0);
}

TEST(Synth, GenerateIsDeterministicAndComplete) {
    TempDir tmp;
    const SceneSpec spec = one_square(1, 1);
    const auto manifest = synth_generate(spec, 4, tmp.path() / "a");
    synth_generate(spec, 4, tmp.path() / "b");
    EXPECT_EQ(tree_bytes(tmp.path() / "a"), tree_bytes(tmp.path() / "b"));

    EXPECT_EQ(manifest.at("files").size(), 6u + 5u + 5u + 6u);
    EXPECT_TRUE(fs::exists(tmp.path() / "a" / "flow" / "00004.flo"));
    EXPECT_FALSE(fs::exists(tmp.path() / "a" / "flow" / "00005.flo"));
    EXPECT_TRUE(verify_sequence(tmp.path() / "a").empty());
}

// ---- dataset --------------------------------------------------------------------------

TEST(Dataset, LoadMatchesRender) {
    TempDir tmp;
    const SceneSpec spec = one_square(2, 0);
    synth_generate(spec, 5, tmp.path() / "s");
    const RenderedScene r = render_scene(spec, 5);
    const Sequence s = load_sequence(tmp.path() / "s");
    ASSERT_EQ(s.length(), 6u);
    EXPECT_EQ(s.flows.size(), 5u);
    EXPECT_EQ(s.flow_rgb.size(), 5u);
    for (std::size_t t = 0; t < 6; ++t) EXPECT_EQ(s.masks[t], r.masks[t]);
    for (std::size_t t = 0; t < 5; ++t) EXPECT_EQ(s.flows[t], r.flows[t]);
    // Frames pass through 8-bit storage.
    for (std::size_t i = 0; i < s.frames[0].numel(); ++i) EXPECT_NEAR(s.frames[0][i], r.frames[0][i], 0.5 / 255 + 1e-6);
}

TEST(Dataset, DetectsTamperingAndMissingFiles) {
    TempDir tmp;
    synth_generate(one_square(1, 0), 5, tmp.path() / "s");
    const fs::path mask = tmp.path() / "s" / "masks" / "00002.pgm";
    std::string bytes = read_file(mask);
    bytes.back() ^= 0x01;
    write_file(mask, bytes);
    EXPECT_EQ(verify_sequence(tmp.path() / "s").size(), 1u);
    EXPECT_THROW(load_sequence(tmp.path() / "s"), FormatError);
    LoadOptions lax;
    lax.verify_checksums = false;
    EXPECT_NO_THROW(load_sequence(tmp.path() / "s", lax));

    fs::remove(tmp.path() / "s" / "flow" / "00001.flo");
    EXPECT_THROW(load_sequence(tmp.path() / "s", lax), FormatError);
    fs::remove(tmp.path() / "s" / "manifest.json");
    EXPECT_THROW(load_sequence(tmp.path() / "s", lax), FormatError);
}

TEST(Dataset, CorruptManifestIsFormatError) {
    TempDir tmp;
    synth_generate(one_square(1, 0), 5, tmp.path() / "s");
    write_file(tmp.path() / "s" / "manifest.json", "{\"frames\": ");
    EXPECT_THROW(load_sequence(tmp.path() / "s"), FormatError);
}

TEST(Dataset, ListingUsesIndexThenChildren) {
    TempDir tmp;
    synth_generate(one_square(1, 0), 1, tmp.path() / "b");
    synth_generate(one_square(1, 0), 2, tmp.path() / "a");
    auto names = [](const std::vector<fs::path>& ps) {
        std::vector<std::string> out;
        for (const auto& p : ps) out.push_back(p.filename().string());
        return out;
    };
    EXPECT_EQ(names(list_sequences(tmp.path())), (std::vector<std::string>{"a", "b"}));
    write_index(tmp.path(), {"b"});
    EXPECT_EQ(names(list_sequences(tmp.path())), (std::vector<std::string>{"b"}));
    EXPECT_EQ(list_sequences(tmp.path() / "a").size(), 1u);
}
