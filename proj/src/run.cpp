#include "hcpn/run.hpp"

#include <set>

namespace hcpn {
namespace {

template <typename T>
T field(const nlohmann::json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
}

template <typename T>
std::vector<Tensor<float>> predict(const ParamStore<T>& params, const ModelConfig& model, const Sequence& seq) {
    return propagate_inference(params, model, seq);
}

}  // namespace

void RunConfig::validate() const {
    if (precision != 32 && precision != 64) throw ConfigError("precision must be 32 or 64");
    model.validate();
    train.validate();
    if (train.iterations == 0) throw ConfigError("iterations must be positive");
}

nlohmann::json RunConfig::to_json() const {
    return {
        {"seed", seed},
        {"precision", precision},
        {"size", model.backbone.width},
        {"levels", model.backbone.levels},
        {"fusion", fusion_name(model.coattention.fusion)},
        {"no_flow_stream", model.ablation.no_flow},
        {"no_frame_stream", model.ablation.no_frame},
        {"two_stream", model.ablation.two_stream},
        {"bypass_pcm", model.coattention.bypass_pcm},
        {"bypass_ccm", model.coattention.bypass_ccm},
        {"bypass_gac", model.ablation.bypass_gac},
        {"bypass_mcr", model.ablation.bypass_mcr},
        {"decoder_width", model.decoder.width},
        {"lr_encoder", train.lr_encoder},
        {"lr_bridge", train.lr_bridge},
        {"lr_decoder", train.lr_decoder},
        {"weight_decay", train.weight_decay},
        {"momentum", train.momentum},
        {"batch", train.batch},
        {"iterations", train.iterations},
    };
}

void RunConfig::merge(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    static const std::set<std::string> known = [] {
        std::set<std::string> k;
        const nlohmann::json defaults = RunConfig{}.to_json();
        for (const auto& [key, _] : defaults.items()) k.insert(key);
        return k;
    }();
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
    }
    if (j.contains("seed")) seed = field<std::uint64_t>(j, "seed");
    if (j.contains("precision")) precision = field<int>(j, "precision");
    if (j.contains("size")) model.set_size(field<std::size_t>(j, "size"));
    if (j.contains("levels")) model.set_levels(field<std::size_t>(j, "levels"));
    if (j.contains("fusion")) model.coattention.fusion = parse_fusion(field<std::string>(j, "fusion"));
    if (j.contains("no_flow_stream")) model.ablation.no_flow = field<bool>(j, "no_flow_stream");
    if (j.contains("no_frame_stream")) model.ablation.no_frame = field<bool>(j, "no_frame_stream");
    if (j.contains("two_stream")) model.ablation.two_stream = field<bool>(j, "two_stream");
    if (j.contains("bypass_pcm")) model.coattention.bypass_pcm = field<bool>(j, "bypass_pcm");
    if (j.contains("bypass_ccm")) model.coattention.bypass_ccm = field<bool>(j, "bypass_ccm");
    if (j.contains("bypass_gac")) model.ablation.bypass_gac = field<bool>(j, "bypass_gac");
    if (j.contains("bypass_mcr")) model.ablation.bypass_mcr = field<bool>(j, "bypass_mcr");
    if (j.contains("decoder_width")) model.decoder.width = field<std::size_t>(j, "decoder_width");
    if (j.contains("lr_encoder")) train.lr_encoder = field<double>(j, "lr_encoder");
    if (j.contains("lr_bridge")) train.lr_bridge = field<double>(j, "lr_bridge");
    if (j.contains("lr_decoder")) train.lr_decoder = field<double>(j, "lr_decoder");
    if (j.contains("weight_decay")) train.weight_decay = field<double>(j, "weight_decay");
    if (j.contains("momentum")) train.momentum = field<double>(j, "momentum");
    if (j.contains("batch")) train.batch = field<std::size_t>(j, "batch");
    if (j.contains("iterations")) train.iterations = field<std::size_t>(j, "iterations");
}

std::vector<Sequence> load_dataset(const std::filesystem::path& root, const LoadOptions& options) {
    std::vector<Sequence> out;
    for (const auto& dir : list_sequences(root)) out.push_back(load_sequence(dir, options));
    if (out.empty()) throw FormatError("no sequences under " + root.string());
    return out;
}

ModelState init_state(const RunConfig& config) {
    config.validate();
    ModelState s{config, {}, {}};
    if (config.precision == 64) {
        s.f64 = init_model<double>(config.model, config.seed);
    } else {
        s.f32 = init_model<float>(config.model, config.seed);
    }
    return s;
}

ModelState train_model(const RunConfig& config, const std::vector<Sequence>& data,
                       const std::function<void(const TrainLogRow&)>& log) {
    ModelState s = init_state(config);
    TrainConfig tc = config.train;
    tc.seed = derive_seed(config.seed, 1);
    if (config.precision == 64) {
        train(s.f64, config.model, data, tc, log);
    } else {
        train(s.f32, config.model, data, tc, log);
    }
    return s;
}

void save_model(const ModelState& state, const std::filesystem::path& blob) {
    const nlohmann::json sidecar = {{"run", state.config.to_json()}, {"model", state.config.model.to_json()}};
    if (state.config.precision == 64) {
        save_checkpoint(state.f64, blob, sidecar);
    } else {
        save_checkpoint(state.f32, blob, sidecar);
    }
}

ModelState load_model(const std::filesystem::path& blob, int precision) {
    const Checkpoint ckpt = read_checkpoint(blob);
    const auto& cfg = ckpt.manifest.contains("config") ? ckpt.manifest["config"] : nlohmann::json();
    if (!cfg.contains("run") || !cfg.contains("model")) {
        throw FormatError("checkpoint " + blob.string() + " has no run configuration sidecar");
    }
    RunConfig run;
    run.merge(cfg["run"]);
    run.model = ModelConfig::from_json(cfg["model"]);
    if (precision != 0) run.precision = precision;
    ModelState s = init_state(run);
    if (run.precision == 64) {
        load_into(s.f64, ckpt);
    } else {
        load_into(s.f32, ckpt);
    }
    return s;
}

std::vector<Tensor<float>> predict_sequence(const ModelState& state, const Sequence& seq) {
    if (seq.frames.front().extent(1) != state.config.model.backbone.height ||
        seq.frames.front().extent(2) != state.config.model.backbone.width) {
        throw DimensionError("sequence " + seq.name + " frames are " + shape_str(seq.frames.front().shape()) +
                             " but the model expects " + std::to_string(state.config.model.backbone.height) + "x" +
                             std::to_string(state.config.model.backbone.width));
    }
    return state.config.precision == 64 ? predict(state.f64, state.config.model, seq)
                                        : predict(state.f32, state.config.model, seq);
}

std::vector<BinaryMask> threshold_all(const std::vector<Tensor<float>>& maps) {
    std::vector<BinaryMask> out;
    for (const auto& m : maps) out.push_back(threshold(m, 0.5));
    return out;
}

SequenceEval evaluate_prediction(const Sequence& seq, const std::vector<BinaryMask>& preds) {
    if (seq.masks.size() != seq.length()) throw FormatError("sequence " + seq.name + " has no ground-truth masks");
    return evaluate_sequence(seq.name, preds, seq.masks, seq.flows, seq.attributes);
}

std::vector<SequenceEval> evaluate_model(const ModelState& state, const std::vector<Sequence>& data) {
    std::vector<SequenceEval> out;
    for (const auto& s : data) out.push_back(evaluate_prediction(s, threshold_all(predict_sequence(state, s))));
    return out;
}

}  // namespace hcpn
