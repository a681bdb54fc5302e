#include "hcpn/train.hpp"

#include <numeric>

#include "hcpn/metrics.hpp"
#include "hcpn/ops.hpp"

namespace hcpn {
namespace {

template <typename T>
Tensor<T> frame_loss(const FramePrediction<T>& p, const BinaryMask& gt) {
    return training_loss(p.refined, p.contours, to_tensor<T>(gt), to_tensor<T>(contour_from_mask(gt)));
}

template <typename T>
PairPrediction<T> run_pair(const Sequence& s, std::size_t t, const ParamStore<T>& params, const ModelConfig& model) {
    return forward_pair(tensor_cast<T>(s.frames[t]), tensor_cast<T>(s.frames[t + 1]), tensor_cast<T>(s.flow_rgb[t]),
                        params, model);
}

}  // namespace

void TrainConfig::validate() const {
    if (!(lr_encoder > 0 && lr_bridge > 0 && lr_decoder > 0)) throw ConfigError("learning rates must be positive");
    if (weight_decay < 0) throw ConfigError("weight decay must be non-negative");
    if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must lie in [0,1)");
    if (batch == 0) throw ConfigError("batch size must be positive");
}

double TrainConfig::rate(ParamGroup g) const {
    switch (g) {
        case ParamGroup::Encoder: return lr_encoder;
        case ParamGroup::Bridge: return lr_bridge;
        case ParamGroup::Decoder: return lr_decoder;
    }
    return 0;
}

std::vector<PairRef> all_pairs(const std::vector<Sequence>& data) {
    std::vector<PairRef> out;
    for (std::size_t s = 0; s < data.size(); ++s) {
        if (data[s].flow_rgb.size() + 1 != data[s].length()) {
            throw FormatError("sequence " + data[s].name + " lacks flow for some frames");
        }
        for (std::size_t t = 0; t + 1 < data[s].length(); ++t) out.push_back({s, t});
    }
    return out;
}

template <typename T>
Tensor<T> pair_loss(const PairPrediction<T>& pred, const BinaryMask& mask_k, const BinaryMask& mask_k1) {
    return scale(add(frame_loss(pred.k, mask_k), frame_loss(pred.k1, mask_k1)), T{0.5});
}

template <typename T>
void Sgd<T>::step(ParamStore<T>& params, const std::vector<std::vector<T>>& grads) {
    const auto& entries = params.entries();
    if (grads.size() != entries.size()) throw ContractError("gradient count does not match parameter count");
    if (velocity_.empty()) {
        for (const auto& e : entries) velocity_.emplace_back(e.value.numel(), T{0});
    }
    const T mu = static_cast<T>(config_.momentum), wd = static_cast<T>(config_.weight_decay);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        const T lr = static_cast<T>(config_.rate(e.group));
        std::vector<T> next(e.value.values().begin(), e.value.values().end());
        std::vector<T>& vel = velocity_[i];
        for (std::size_t k = 0; k < next.size(); ++k) {
            vel[k] = mu * vel[k] + grads[i][k] + wd * next[k];
            next[k] -= lr * vel[k];
        }
        params.set(e.name, Tensor<T>(e.value.shape(), std::move(next)));
    }
}

template <typename T>
void train(ParamStore<T>& params, const ModelConfig& model, const std::vector<Sequence>& data,
           const TrainConfig& config, const std::function<void(const TrainLogRow&)>& log) {
    config.validate();
    model.validate();
    const std::vector<PairRef> pairs = all_pairs(data);
    if (pairs.empty()) throw ContractError("no training pairs");
    for (const auto& s : data) {
        if (s.masks.size() != s.length()) throw FormatError("training sequence " + s.name + " lacks masks");
    }

    Rng rng(config.seed);
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = order.size();
    auto next_pair = [&] {
        if (cursor == order.size()) {
            for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
            cursor = 0;
        }
        return pairs[order[cursor++]];
    };

    Sgd<T> sgd(config);
    const T inv_batch = static_cast<T>(1.0 / static_cast<double>(config.batch));
    for (std::size_t iter = 0; iter < config.iterations; ++iter) {
        std::vector<std::vector<T>> grads;
        for (const auto& e : params.entries()) grads.emplace_back(e.value.numel(), T{0});
        double loss_sum = 0, probe_j = 0;
        for (std::size_t b = 0; b < config.batch; ++b) {
            const PairRef ref = next_pair();
            const Sequence& s = data[ref.sequence];
            Tape<T> tape;
            const ParamStore<T> bound = params.bind(tape);
            const PairPrediction<T> pred = run_pair(s, ref.t, bound, model);
            const Tensor<T> loss = pair_loss(pred, s.masks[ref.t], s.masks[ref.t + 1]);
            if (!std::isfinite(static_cast<double>(loss.item()))) {
                throw CorruptStateError("non-finite training loss at iteration " + std::to_string(iter));
            }
            tape.backward(scale(loss, inv_batch));
            for (std::size_t i = 0; i < grads.size(); ++i) {
                const Tensor<T> g = tape.grad(bound.entries()[i].value);
                for (std::size_t k = 0; k < g.numel(); ++k) grads[i][k] += g[k];
            }
            loss_sum += static_cast<double>(loss.item());
            if (b == 0) {
                probe_j = region_similarity(threshold(pred.k.refined, 0.5), s.masks[ref.t]);
            }
        }
        sgd.step(params, grads);
        if (log) log({iter, loss_sum / static_cast<double>(config.batch), probe_j});
    }
}

std::vector<Tensor<float>> merge_pair_predictions(
    const std::vector<std::pair<Tensor<float>, Tensor<float>>>& pair_maps) {
    if (pair_maps.empty()) throw ContractError("need at least one pair prediction");
    const std::size_t n = pair_maps.size() + 1;
    const Shape shape = pair_maps.front().first.shape();
    std::vector<std::vector<float>> sums(n, std::vector<float>(shape_numel(shape), 0.0f));
    std::vector<int> counts(n, 0);
    for (std::size_t t = 0; t < pair_maps.size(); ++t) {
        for (std::size_t side = 0; side < 2; ++side) {
            const Tensor<float>& m = side == 0 ? pair_maps[t].first : pair_maps[t].second;
            if (m.shape() != shape) throw DimensionError("pair predictions differ in shape");
            auto& acc = sums[t + side];
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += m[i];
            ++counts[t + side];
        }
    }
    std::vector<Tensor<float>> out;
    for (std::size_t t = 0; t < n; ++t) {
        if (counts[t] == 2) {
            for (float& v : sums[t]) v *= 0.5f;
        }
        out.emplace_back(shape, std::move(sums[t]));
    }
    return out;
}

template <typename T>
std::vector<Tensor<float>> propagate_inference(const ParamStore<T>& params, const ModelConfig& model,
                                               const Sequence& seq) {
    if (seq.length() < 2) throw ContractError("inference needs at least two frames");
    if (seq.flow_rgb.size() + 1 != seq.length()) throw FormatError("sequence " + seq.name + " lacks flow for some frames");
    std::vector<std::pair<Tensor<float>, Tensor<float>>> maps;
    for (std::size_t t = 0; t + 1 < seq.length(); ++t) {
        const PairPrediction<T> p = run_pair(seq, t, params, model);
        maps.emplace_back(tensor_cast<float>(p.k.refined), tensor_cast<float>(p.k1.refined));
    }
    return merge_pair_predictions(maps);
}

#define HCPN_INSTANTIATE_TRAIN(T)                                                                                     \
    template Tensor<T> pair_loss(const PairPrediction<T>&, const BinaryMask&, const BinaryMask&);                     \
    template class Sgd<T>;                                                                                            \
    template void train(ParamStore<T>&, const ModelConfig&, const std::vector<Sequence>&, const TrainConfig&,         \
                        const std::function<void(const TrainLogRow&)>&);                                              \
    template std::vector<Tensor<float>> propagate_inference(const ParamStore<T>&, const ModelConfig&, const Sequence&);

HCPN_INSTANTIATE_TRAIN(float)
HCPN_INSTANTIATE_TRAIN(double)

}  // namespace hcpn
