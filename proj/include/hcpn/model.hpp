#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcpn/bridge.hpp"
#include "hcpn/coattention.hpp"
#include "hcpn/decoder.hpp"
#include "hcpn/encoder.hpp"

namespace hcpn {

struct Ablation {
    bool no_flow = false;     // motion features replaced by zeros
    bool no_frame = false;    // appearance features replaced by zeros
    bool two_stream = false;  // frame k+1 appearance replaced by frame k
    bool bypass_gac = false;
    bool bypass_mcr = false;  // P^m = T^m
};

struct ModelConfig {
    BackboneConfig backbone;
    CoattentionConfig coattention;
    DecoderConfig decoder;
    Ablation ablation;

    void validate() const;
    // Shrinks or grows the cascade to `levels` using the default channel ladder.
    void set_levels(std::size_t levels);
    // Canvas size in pixels (square).
    void set_size(std::size_t size);

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

std::string fusion_name(Fusion f);
Fusion parse_fusion(const std::string& s);

template <typename T>
ParamStore<T> init_model(const ModelConfig& config, std::uint64_t seed);

// Predictions for one frame of a pair.
template <typename T>
struct FramePrediction {
    Tensor<T> coarse;
    std::vector<Tensor<T>> contours;
    Tensor<T> refined;
};

template <typename T>
struct PairPrediction {
    FramePrediction<T> k;
    FramePrediction<T> k1;
};

// Full network on one pair. Images are {3,h,w} in [0,1].
template <typename T>
PairPrediction<T> forward_pair(const Tensor<T>& frame_k, const Tensor<T>& frame_k1, const Tensor<T>& flow_rgb,
                               const ParamStore<T>& params, const ModelConfig& config);

}  // namespace hcpn
