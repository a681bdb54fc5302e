#pragma once

#include <cstddef>
#include <vector>

#include "hcpn/params.hpp"
#include "hcpn/tensor.hpp"

namespace hcpn {

struct BackboneConfig {
    std::size_t levels = 4;
    std::vector<std::size_t> channels{16, 32, 64, 128};
    std::size_t stem_stride = 2;
    std::size_t width = 64;
    std::size_t height = 64;

    // Throws ConfigError on an inconsistent configuration.
    void validate() const;

    // Spatial extent of level l (1-based): size / stride^l.
    std::size_t level_height(std::size_t l) const;
    std::size_t level_width(std::size_t l) const;
    std::size_t level_channels(std::size_t l) const { return channels.at(l - 1); }
};

// Per-level feature maps; index 0 holds level 1.
template <typename T>
struct StreamFeatures {
    std::vector<Tensor<T>> appearance_k;
    std::vector<Tensor<T>> motion;
    std::vector<Tensor<T>> appearance_k1;

    std::size_t levels() const { return motion.size(); }
};

// Adds "enc.app.*" (shared by both frames) and "enc.mot.*" kernels.
template <typename T>
void init_encoder(ParamStore<T>& params, const BackboneConfig& config, Rng& rng);

// Each level: conv3x3 -> relu -> conv3x3 (stride) -> relu. Inputs are
// {3,h,w} images in [0,1]; the flow arrives colour-coded.
template <typename T>
StreamFeatures<T> encode_streams(const Tensor<T>& frame_k, const Tensor<T>& frame_k1, const Tensor<T>& flow_rgb,
                                 const ParamStore<T>& params, const BackboneConfig& config);

// One stream of the backbone; `stream` is "app" or "mot".
template <typename T>
std::vector<Tensor<T>> encode_stream(const Tensor<T>& image, const ParamStore<T>& params, const BackboneConfig& config,
                                     const std::string& stream);

}  // namespace hcpn
