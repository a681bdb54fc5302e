#include "hcpn/model.hpp"

#include "hcpn/ops.hpp"

namespace hcpn {
namespace {

const std::vector<std::size_t> kChannelLadder{16, 32, 64, 128};

template <typename T>
std::vector<Tensor<T>> zeros_like(const std::vector<Tensor<T>>& maps) {
    std::vector<Tensor<T>> out;
    for (const auto& m : maps) out.emplace_back(m.shape());
    return out;
}

template <typename T>
FramePrediction<T> predict_frame(const std::vector<Tensor<T>>& cascade, const ParamStore<T>& params,
                                 const ModelConfig& config) {
    std::vector<Tensor<T>> bridged;
    for (std::size_t l = 1; l <= cascade.size(); ++l) {
        const Tensor<T>& v = cascade[l - 1];
        bridged.push_back(config.ablation.bypass_gac ? v : gac_forward(v, params, "gac.l" + std::to_string(l)));
    }
    DecoderOutput<T> dec = decode_masks(bridged, params, config.backbone, config.decoder);
    FramePrediction<T> out{dec.coarse, std::move(dec.contours), {}};
    out.refined = config.ablation.bypass_mcr ? out.coarse : mcr_refine(out.coarse, out.contours);
    return out;
}

}  // namespace

void ModelConfig::validate() const {
    backbone.validate();
    for (std::size_t l = 1; l <= backbone.levels; ++l) coattention.validate(backbone.level_channels(l));
    if (decoder.width < 2 || decoder.width % 2 != 0) throw ConfigError("decoder width must be even and >= 2");
    if (ablation.no_flow && ablation.no_frame) throw ConfigError("cannot disable both the flow and frame streams");
}

void ModelConfig::set_levels(std::size_t levels) {
    if (levels < 1 || levels > kChannelLadder.size()) {
        throw ConfigError("levels must be in [1," + std::to_string(kChannelLadder.size()) + "], got " +
                          std::to_string(levels));
    }
    backbone.levels = levels;
    backbone.channels.assign(kChannelLadder.begin(), kChannelLadder.begin() + static_cast<std::ptrdiff_t>(levels));
}

void ModelConfig::set_size(std::size_t size) {
    backbone.width = size;
    backbone.height = size;
}

std::string fusion_name(Fusion f) {
    switch (f) {
        case Fusion::Gaf: return "gaf";
        case Fusion::Add: return "add";
        case Fusion::Concat: return "concat";
    }
    return "?";
}

Fusion parse_fusion(const std::string& s) {
    if (s == "gaf") return Fusion::Gaf;
    if (s == "add") return Fusion::Add;
    if (s == "concat") return Fusion::Concat;
    throw ConfigError("unknown fusion '" + s + "' (expected gaf, add or concat)");
}

nlohmann::json ModelConfig::to_json() const {
    return {
        {"levels", backbone.levels},
        {"channels", backbone.channels},
        {"stem_stride", backbone.stem_stride},
        {"width", backbone.width},
        {"height", backbone.height},
        {"heads", coattention.heads},
        {"reduction", coattention.reduction},
        {"fusion", fusion_name(coattention.fusion)},
        {"bypass_pcm", coattention.bypass_pcm},
        {"bypass_ccm", coattention.bypass_ccm},
        {"decoder_width", decoder.width},
        {"dilations", decoder.dilations},
        {"no_flow", ablation.no_flow},
        {"no_frame", ablation.no_frame},
        {"two_stream", ablation.two_stream},
        {"bypass_gac", ablation.bypass_gac},
        {"bypass_mcr", ablation.bypass_mcr},
    };
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
        c.backbone.levels = j.value("levels", c.backbone.levels);
        c.backbone.channels = j.value("channels", c.backbone.channels);
        c.backbone.stem_stride = j.value("stem_stride", c.backbone.stem_stride);
        c.backbone.width = j.value("width", c.backbone.width);
        c.backbone.height = j.value("height", c.backbone.height);
        c.coattention.heads = j.value("heads", c.coattention.heads);
        c.coattention.reduction = j.value("reduction", c.coattention.reduction);
        c.coattention.fusion = parse_fusion(j.value("fusion", std::string("gaf")));
        c.coattention.bypass_pcm = j.value("bypass_pcm", false);
        c.coattention.bypass_ccm = j.value("bypass_ccm", false);
        c.decoder.width = j.value("decoder_width", c.decoder.width);
        c.decoder.dilations = j.value("dilations", c.decoder.dilations);
        c.ablation.no_flow = j.value("no_flow", false);
        c.ablation.no_frame = j.value("no_frame", false);
        c.ablation.two_stream = j.value("two_stream", false);
        c.ablation.bypass_gac = j.value("bypass_gac", false);
        c.ablation.bypass_mcr = j.value("bypass_mcr", false);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

template <typename T>
ParamStore<T> init_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    ParamStore<T> params;
    Rng rng(seed);
    init_encoder(params, config.backbone, rng);
    init_coattention(params, config.backbone, config.coattention, rng);
    for (std::size_t l = 1; l <= config.backbone.levels; ++l) {
        init_gac(params, "gac.l" + std::to_string(l), 2 * config.backbone.level_channels(l),
                 config.backbone.level_height(l) * config.backbone.level_width(l));
    }
    init_decoder(params, config.backbone, config.decoder, rng);
    return params;
}

template <typename T>
PairPrediction<T> forward_pair(const Tensor<T>& frame_k, const Tensor<T>& frame_k1, const Tensor<T>& flow_rgb,
                               const ParamStore<T>& params, const ModelConfig& config) {
    StreamFeatures<T> streams = encode_streams(frame_k, frame_k1, flow_rgb, params, config.backbone);
    if (config.ablation.two_stream) streams.appearance_k1 = streams.appearance_k;
    if (config.ablation.no_flow) streams.motion = zeros_like(streams.motion);
    if (config.ablation.no_frame) {
        streams.appearance_k = zeros_like(streams.appearance_k);
        streams.appearance_k1 = zeros_like(streams.appearance_k1);
    }
    const CascadeOutput<T> cascade = hcpn_cascade(streams, params, config.backbone, config.coattention);
    return {predict_frame(cascade.v_k, params, config), predict_frame(cascade.v_k1, params, config)};
}

template ParamStore<float> init_model(const ModelConfig&, std::uint64_t);
template ParamStore<double> init_model(const ModelConfig&, std::uint64_t);
template PairPrediction<float> forward_pair(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                            const ParamStore<float>&, const ModelConfig&);
template PairPrediction<double> forward_pair(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                             const ParamStore<double>&, const ModelConfig&);

}  // namespace hcpn
