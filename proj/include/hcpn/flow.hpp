#pragma once

#include <array>

#include "hcpn/io.hpp"
#include "hcpn/mask.hpp"

namespace hcpn {

// Middlebury colour wheel: 55 hues in [0,1], red through yellow, green,
// cyan, blue and magenta.
const std::vector<std::array<float, 3>>& color_wheel();

// Colour-codes a field as a {3,h,w} image in [0,1]. Hue follows the flow
// direction; saturation grows with min(|f| / max_mag, 1). Zero flow is white.
Tensor<float> encode_flow(const FlowField& flow, float max_mag);

// Inverse of encode_flow for magnitudes up to max_mag.
FlowField decode_flow(const Tensor<float>& rgb, float max_mag);

// 99th-percentile magnitude, or 1 when that is zero.
float flow_scale(const FlowField& flow);

// Forward-splats every foreground pixel along the rounded flow; pixels that
// land outside the image are dropped.
BinaryMask warp_mask(const BinaryMask& mask, const FlowField& flow);

}  // namespace hcpn
