#include "hcpn/encoder.hpp"

#include "hcpn/ops.hpp"

namespace hcpn {

void BackboneConfig::validate() const {
    if (levels < 1) throw ConfigError("backbone needs at least one level");
    if (channels.size() != levels) {
        throw ConfigError("backbone has " + std::to_string(levels) + " levels but " + std::to_string(channels.size()) +
                          " channel counts");
    }
    for (std::size_t i = 0; i < channels.size(); ++i) {
        if (channels[i] == 0) throw ConfigError("backbone channel count must be positive");
        if (i > 0 && channels[i] <= channels[i - 1]) throw ConfigError("backbone channels must be strictly increasing");
    }
    if (stem_stride < 1) throw ConfigError("stem stride must be at least 1");
    std::size_t div = 1;
    for (std::size_t l = 0; l < levels; ++l) div *= stem_stride;
    if (width == 0 || height == 0 || width % div != 0 || height % div != 0) {
        throw ConfigError("input " + std::to_string(width) + "x" + std::to_string(height) + " is not divisible by " +
                          std::to_string(div) + " (stride^levels)");
    }
}

std::size_t BackboneConfig::level_height(std::size_t l) const {
    std::size_t v = height;
    for (std::size_t i = 0; i < l; ++i) v /= stem_stride;
    return v;
}

std::size_t BackboneConfig::level_width(std::size_t l) const {
    std::size_t v = width;
    for (std::size_t i = 0; i < l; ++i) v /= stem_stride;
    return v;
}

template <typename T>
void init_encoder(ParamStore<T>& params, const BackboneConfig& config, Rng& rng) {
    config.validate();
    for (const char* stream : {"app", "mot"}) {
        std::size_t cin = 3;
        for (std::size_t l = 1; l <= config.levels; ++l) {
            const std::string p = "enc." + std::string(stream) + ".l" + std::to_string(l);
            const std::size_t c = config.level_channels(l);
            add_conv(params, rng, p + ".conv1", ParamGroup::Encoder, c, cin, 3);
            add_conv(params, rng, p + ".conv2", ParamGroup::Encoder, c, c, 3);
            cin = c;
        }
    }
}

template <typename T>
std::vector<Tensor<T>> encode_stream(const Tensor<T>& image, const ParamStore<T>& params, const BackboneConfig& config,
                                     const std::string& stream) {
    if (image.rank() != 3 || image.extent(0) != 3 || image.extent(1) != config.height ||
        image.extent(2) != config.width) {
        throw DimensionError("encoder expects a [3," + std::to_string(config.height) + "," +
                             std::to_string(config.width) + "] image, got " + shape_str(image.shape()));
    }
    TapeScope<T> scope(image.tape() ? image.tape() : params.tape(), "encoder");
    std::vector<Tensor<T>> levels;
    Tensor<T> x = image;
    for (std::size_t l = 1; l <= config.levels; ++l) {
        const std::string p = "enc." + stream + ".l" + std::to_string(l);
        x = relu(conv2d(x, params.get(p + ".conv1.w"), &params.get(p + ".conv1.b")));
        x = relu(conv2d(x, params.get(p + ".conv2.w"), &params.get(p + ".conv2.b"), {.stride = config.stem_stride}));
        levels.push_back(x);
    }
    return levels;
}

template <typename T>
StreamFeatures<T> encode_streams(const Tensor<T>& frame_k, const Tensor<T>& frame_k1, const Tensor<T>& flow_rgb,
                                 const ParamStore<T>& params, const BackboneConfig& config) {
    if (frame_k.shape() != frame_k1.shape() || frame_k.shape() != flow_rgb.shape()) {
        throw DimensionError("encoder inputs disagree: " + shape_str(frame_k.shape()) + ", " +
                             shape_str(frame_k1.shape()) + ", " + shape_str(flow_rgb.shape()));
    }
    StreamFeatures<T> out;
    out.appearance_k = encode_stream(frame_k, params, config, "app");
    out.motion = encode_stream(flow_rgb, params, config, "mot");
    out.appearance_k1 = encode_stream(frame_k1, params, config, "app");
    return out;
}

#define HCPN_INSTANTIATE_ENCODER(T)                                                                                   \
    template void init_encoder(ParamStore<T>&, const BackboneConfig&, Rng&);                                          \
    template std::vector<Tensor<T>> encode_stream(const Tensor<T>&, const ParamStore<T>&, const BackboneConfig&,      \
                                                  const std::string&);                                                \
    template StreamFeatures<T> encode_streams(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                   \
                                              const ParamStore<T>&, const BackboneConfig&);

HCPN_INSTANTIATE_ENCODER(float)
HCPN_INSTANTIATE_ENCODER(double)

}  // namespace hcpn
