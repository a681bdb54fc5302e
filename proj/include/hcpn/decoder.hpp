#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "hcpn/encoder.hpp"
#include "hcpn/mask.hpp"
#include "hcpn/params.hpp"

namespace hcpn {

struct DecoderConfig {
    std::size_t width = 32;
    std::array<std::size_t, 4> dilations{1, 6, 12, 18};
};

// Dilation actually used on a map of the given extent: the requested value,
// capped so that the outer taps can still reach inside the map.
std::size_t clamp_dilation(std::size_t dilation, std::size_t height, std::size_t width);

// Under "dec.": aspp.d<i>, aspp.pool, aspp.fuse, skip.l<l>, up.l<l>,
// contour.l<l>, refine, mask.
template <typename T>
void init_decoder(ParamStore<T>& params, const BackboneConfig& backbone, const DecoderConfig& config, Rng& rng);

template <typename T>
struct DecoderOutput {
    Tensor<T> coarse;                 // T^m, {1,h,w}
    std::vector<Tensor<T>> contours;  // P^r_j, one per level, {1,h,w}
};

// `features[l-1]` is the bridged map of level l, {2C_l, H_l, W_l}.
template <typename T>
DecoderOutput<T> decode_masks(const std::vector<Tensor<T>>& features, const ParamStore<T>& params,
                              const BackboneConfig& backbone, const DecoderConfig& config);

// Region gate from voted contours: threshold the mean contour at 0.5, close,
// and keep everything not reachable from the border.
template <typename T>
BinaryMask contour_region(const Tensor<T>& vote);

// P^m = max(v, inside) * T^m with v the mean contour map. The region
// indicator is a constant for differentiation.
template <typename T>
Tensor<T> mcr_refine(const Tensor<T>& coarse, const std::vector<Tensor<T>>& contours);

// BCE(P^m, G^m) + mean_j BCE(P^r_j, G^r). Ground truths must be binary.
template <typename T>
Tensor<T> training_loss(const Tensor<T>& refined, const std::vector<Tensor<T>>& contours, const Tensor<T>& gt_mask,
                        const Tensor<T>& gt_contour);

}  // namespace hcpn
