#include "hcpn/decoder.hpp"

#include <algorithm>
#include <cmath>

#include "hcpn/ops.hpp"

namespace hcpn {
namespace {

template <typename T>
Tensor<T> conv(const Tensor<T>& x, const ParamStore<T>& params, const std::string& name, Conv2dOptions opts = {}) {
    return conv2d(x, params.get(name + ".w"), &params.get(name + ".b"), opts);
}

template <typename T>
Tensor<T> mean_of(const std::vector<Tensor<T>>& maps) {
    Tensor<T> acc = maps.front();
    for (std::size_t i = 1; i < maps.size(); ++i) acc = add(acc, maps[i]);
    return maps.size() == 1 ? acc : scale(acc, static_cast<T>(1.0 / static_cast<double>(maps.size())));
}

template <typename T>
void require_binary(const Tensor<T>& t, const char* what) {
    for (T v : t.values()) {
        if (v != T{0} && v != T{1}) throw ContractError(std::string(what) + " must be binary");
    }
}

// Hidden convolutions feed relus; use the matching gain of sqrt(2).
template <typename T>
void add_relu_conv(ParamStore<T>& params, Rng& rng, const std::string& prefix, std::size_t cout, std::size_t cin,
                   std::size_t k) {
    const double bound = std::sqrt(6.0 / static_cast<double>(cin * k * k));
    params.add(prefix + ".w", ParamGroup::Decoder, rng.uniform_tensor<T>({cout, cin, k, k}, -bound, bound));
    params.add(prefix + ".b", ParamGroup::Decoder, Tensor<T>({cout}));
}

// 1x1 output head starting at sigmoid(0) = 0.5 everywhere.
template <typename T>
void add_zero_head(ParamStore<T>& params, const std::string& prefix, std::size_t cin) {
    params.add(prefix + ".w", ParamGroup::Decoder, Tensor<T>({1, cin, 1, 1}));
    params.add(prefix + ".b", ParamGroup::Decoder, Tensor<T>({1}));
}

}  // namespace

std::size_t clamp_dilation(std::size_t dilation, std::size_t height, std::size_t width) {
    const std::size_t extent = std::min(height, width);
    const std::size_t cap = extent > 1 ? extent - 1 : 1;
    return std::max<std::size_t>(1, std::min(dilation, cap));
}

template <typename T>
void init_decoder(ParamStore<T>& params, const BackboneConfig& backbone, const DecoderConfig& config, Rng& rng) {
    backbone.validate();
    const std::size_t d = config.width, levels = backbone.levels;
    const std::size_t deep = 2 * backbone.level_channels(levels);
    for (std::size_t i = 0; i < config.dilations.size(); ++i) {
        add_relu_conv(params, rng, "dec.aspp.d" + std::to_string(i), d, deep, 3);
    }
    add_relu_conv(params, rng, "dec.aspp.pool", d, deep, 1);
    add_relu_conv(params, rng, "dec.aspp.fuse", d, d * (config.dilations.size() + 1), 1);
    for (std::size_t l = levels; l >= 1; --l) {
        const std::string s = std::to_string(l);
        add_conv(params, rng, "dec.skip.l" + s, ParamGroup::Decoder, d, 2 * backbone.level_channels(l), 1);
        add_relu_conv(params, rng, "dec.up.l" + s, d, d, 3);
        add_zero_head(params, "dec.contour.l" + s, d);
    }
    add_relu_conv(params, rng, "dec.refine", d / 2, d, 3);
    add_zero_head(params, "dec.mask", d / 2);
}

template <typename T>
DecoderOutput<T> decode_masks(const std::vector<Tensor<T>>& features, const ParamStore<T>& params,
                              const BackboneConfig& backbone, const DecoderConfig& config) {
    const std::size_t levels = backbone.levels;
    if (features.size() != levels) {
        throw ConfigError("decoder expects " + std::to_string(levels) + " levels, got " +
                          std::to_string(features.size()));
    }
    for (std::size_t l = 1; l <= levels; ++l) {
        const Shape want{2 * backbone.level_channels(l), backbone.level_height(l), backbone.level_width(l)};
        if (features[l - 1].shape() != want) {
            throw DimensionError("decoder level " + std::to_string(l) + " expects " + shape_str(want) + ", got " +
                                 shape_str(features[l - 1].shape()));
        }
    }
    TapeScope<T> scope(features.back().tape() ? features.back().tape() : params.tape(), "decoder_mcr");
    const std::size_t h = backbone.height, w = backbone.width;

    const Tensor<T>& deep = features.back();
    const std::size_t dh = deep.extent(1), dw = deep.extent(2);
    std::vector<Tensor<T>> branches;
    for (std::size_t i = 0; i < config.dilations.size(); ++i) {
        const Conv2dOptions opts{.dilation = clamp_dilation(config.dilations[i], dh, dw)};
        branches.push_back(relu(conv(deep, params, "dec.aspp.d" + std::to_string(i), opts)));
    }
    branches.push_back(resize_bilinear(relu(conv(global_avg_pool(deep), params, "dec.aspp.pool")), dh, dw));
    Tensor<T> x = relu(conv(concat(branches), params, "dec.aspp.fuse"));

    DecoderOutput<T> out;
    out.contours.resize(levels);
    for (std::size_t l = levels; l >= 1; --l) {
        const std::string s = std::to_string(l);
        const Tensor<T>& skip = features[l - 1];
        x = resize_bilinear(x, skip.extent(1), skip.extent(2));
        x = relu(conv(add(x, conv(skip, params, "dec.skip.l" + s)), params, "dec.up.l" + s));
        out.contours[l - 1] = sigmoid(resize_bilinear(conv(x, params, "dec.contour.l" + s), h, w));
    }
    x = relu(conv(resize_bilinear(x, h, w), params, "dec.refine"));
    out.coarse = sigmoid(conv(x, params, "dec.mask"));
    return out;
}

template <typename T>
BinaryMask contour_region(const Tensor<T>& vote) {
    return fill_enclosed(close3x3(threshold(vote, 0.5)));
}

template <typename T>
Tensor<T> mcr_refine(const Tensor<T>& coarse, const std::vector<Tensor<T>>& contours) {
    if (contours.empty()) throw DimensionError("mcr_refine needs at least one contour map");
    for (const auto& c : contours) {
        if (c.shape() != coarse.shape()) {
            throw DimensionError("mcr_refine: contour " + shape_str(c.shape()) + " vs mask " +
                                 shape_str(coarse.shape()));
        }
    }
    TapeScope<T> scope(coarse.tape() ? coarse.tape() : contours.front().tape(), "decoder_mcr");
    const Tensor<T> vote = mean_of(contours);
    const Tensor<T> inside = to_tensor<T>(contour_region(vote)).reshaped(coarse.shape());
    return hadamard(max_with_constant(vote, inside), coarse);
}

template <typename T>
Tensor<T> training_loss(const Tensor<T>& refined, const std::vector<Tensor<T>>& contours, const Tensor<T>& gt_mask,
                        const Tensor<T>& gt_contour) {
    require_binary(gt_mask, "ground-truth mask");
    require_binary(gt_contour, "ground-truth contour");
    if (contours.empty()) throw DimensionError("training_loss needs at least one contour map");
    TapeScope<T> scope(refined.tape(), "decoder_mcr");
    std::vector<Tensor<T>> terms;
    for (const auto& c : contours) terms.push_back(binary_cross_entropy(c, gt_contour));
    return add(binary_cross_entropy(refined, gt_mask), mean_of(terms));
}

#define HCPN_INSTANTIATE_DECODER(T)                                                                                   \
    template void init_decoder(ParamStore<T>&, const BackboneConfig&, const DecoderConfig&, Rng&);                    \
    template DecoderOutput<T> decode_masks(const std::vector<Tensor<T>>&, const ParamStore<T>&,                       \
                                           const BackboneConfig&, const DecoderConfig&);                              \
    template BinaryMask contour_region(const Tensor<T>&);                                                             \
    template Tensor<T> mcr_refine(const Tensor<T>&, const std::vector<Tensor<T>>&);                                  \
    template Tensor<T> training_loss(const Tensor<T>&, const std::vector<Tensor<T>>&, const Tensor<T>&,              \
                                     const Tensor<T>&);

HCPN_INSTANTIATE_DECODER(float)
HCPN_INSTANTIATE_DECODER(double)

}  // namespace hcpn
