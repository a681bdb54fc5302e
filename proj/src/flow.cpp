#include "hcpn/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace hcpn {

const std::vector<std::array<float, 3>>& color_wheel() {
    static const std::vector<std::array<float, 3>> wheel = [] {
        constexpr int kRY = 15, kYG = 6, kGC = 4, kCB = 11, kBM = 13, kMR = 6;
        std::vector<std::array<float, 3>> w;
        auto f = [](int i, int n) { return static_cast<float>(i) / static_cast<float>(n); };
        for (int i = 0; i < kRY; ++i) w.push_back({1, f(i, kRY), 0});
        for (int i = 0; i < kYG; ++i) w.push_back({1 - f(i, kYG), 1, 0});
        for (int i = 0; i < kGC; ++i) w.push_back({0, 1, f(i, kGC)});
        for (int i = 0; i < kCB; ++i) w.push_back({0, 1 - f(i, kCB), 1});
        for (int i = 0; i < kBM; ++i) w.push_back({f(i, kBM), 0, 1});
        for (int i = 0; i < kMR; ++i) w.push_back({1, 0, 1 - f(i, kMR)});
        return w;
    }();
    return wheel;
}

Tensor<float> encode_flow(const FlowField& flow, float max_mag) {
    if (!(max_mag > 0)) throw ContractError("flow encoding needs max_mag > 0");
    const auto& wheel = color_wheel();
    const int ncols = static_cast<int>(wheel.size());
    const std::size_t plane = flow.height * flow.width;
    std::vector<float> out(3 * plane);
    for (std::size_t i = 0; i < plane; ++i) {
        const double u = flow.uv[2 * i], v = flow.uv[2 * i + 1];
        const double rad = std::min(1.0, std::hypot(u, v) / max_mag);
        const double a = std::atan2(-v, -u) / std::numbers::pi;
        const double fk = (a + 1) / 2 * (ncols - 1);
        const int k0 = std::clamp(static_cast<int>(std::floor(fk)), 0, ncols - 1);
        const int k1 = (k0 + 1) % ncols;
        const double f = fk - k0;
        for (std::size_t c = 0; c < 3; ++c) {
            const double col = (1 - f) * wheel[k0][c] + f * wheel[k1][c];
            out[c * plane + i] = static_cast<float>(1 - rad * (1 - col));
        }
    }
    return Tensor<float>({3, flow.height, flow.width}, std::move(out));
}

FlowField decode_flow(const Tensor<float>& rgb, float max_mag) {
    if (rgb.rank() != 3 || rgb.extent(0) != 3) throw DimensionError("flow image must be [3,h,w], got " + shape_str(rgb.shape()));
    if (!(max_mag > 0)) throw ContractError("flow decoding needs max_mag > 0");
    const auto& wheel = color_wheel();
    const int ncols = static_cast<int>(wheel.size());
    FlowField flow(rgb.extent(1), rgb.extent(2));
    const std::size_t plane = flow.height * flow.width;
    for (std::size_t i = 0; i < plane; ++i) {
        const double col[3] = {rgb[i], rgb[plane + i], rgb[2 * plane + i]};
        // Every wheel colour has min 0 and max 1, so the smallest channel
        // carries the saturation.
        const double rad = std::clamp(1 - std::min({col[0], col[1], col[2]}), 0.0, 1.0);
        if (rad <= 0) continue;
        double w[3];
        for (int c = 0; c < 3; ++c) w[c] = 1 - (1 - col[c]) / rad;

        double best = std::numeric_limits<double>::infinity(), best_fk = 0;
        for (int k0 = 0; k0 < ncols - 1; ++k0) {
            const auto& c0 = wheel[k0];
            const auto& c1 = wheel[k0 + 1];
            double num = 0, den = 0;
            for (int c = 0; c < 3; ++c) {
                const double d = c1[c] - c0[c];
                num += (w[c] - c0[c]) * d;
                den += d * d;
            }
            const double f = den > 0 ? std::clamp(num / den, 0.0, 1.0) : 0.0;
            double res = 0;
            for (int c = 0; c < 3; ++c) {
                const double e = (1 - f) * c0[c] + f * c1[c] - w[c];
                res += e * e;
            }
            if (res < best) {
                best = res;
                best_fk = k0 + f;
            }
        }
        const double angle = (best_fk / (ncols - 1) * 2 - 1) * std::numbers::pi;
        const double mag = rad * max_mag;
        flow.uv[2 * i] = static_cast<float>(-mag * std::cos(angle));
        flow.uv[2 * i + 1] = static_cast<float>(-mag * std::sin(angle));
    }
    return flow;
}

float flow_scale(const FlowField& flow) {
    const std::size_t n = flow.height * flow.width;
    if (n == 0) return 1.0f;
    std::vector<float> mags(n);
    for (std::size_t i = 0; i < n; ++i) mags[i] = std::hypot(flow.uv[2 * i], flow.uv[2 * i + 1]);
    const std::size_t k = std::min(n - 1, static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(n))) - 1);
    std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(k), mags.end());
    const float m = mags[k];
    return m > 0 ? m : 1.0f;
}

BinaryMask warp_mask(const BinaryMask& mask, const FlowField& flow) {
    if (mask.height != flow.height || mask.width != flow.width) {
        throw DimensionError("warp_mask: mask " + std::to_string(mask.height) + "x" + std::to_string(mask.width) +
                             " vs flow " + std::to_string(flow.height) + "x" + std::to_string(flow.width));
    }
    BinaryMask out(mask.height, mask.width);
    const auto h = static_cast<long>(mask.height), w = static_cast<long>(mask.width);
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            if (!mask.at(y, x)) continue;
            const long tx = x + std::lround(flow.u(y, x));
            const long ty = y + std::lround(flow.v(y, x));
            if (tx >= 0 && tx < w && ty >= 0 && ty < h) out.at(ty, tx) = 1;
        }
    }
    return out;
}

}  // namespace hcpn
