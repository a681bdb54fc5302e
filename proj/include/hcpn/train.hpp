#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "hcpn/dataset.hpp"
#include "hcpn/model.hpp"

namespace hcpn {

struct TrainConfig {
    double lr_encoder = 1e-4;  // backbone and co-attention blocks
    double lr_bridge = 1e-4;
    double lr_decoder = 1e-3;
    double weight_decay = 1e-5;
    double momentum = 0.9;
    std::size_t batch = 4;
    std::size_t iterations = 500;
    std::uint64_t seed = 0;

    void validate() const;
    double rate(ParamGroup g) const;
};

// Consecutive frames (t, t+1) of one sequence.
struct PairRef {
    std::size_t sequence = 0;
    std::size_t t = 0;
};

std::vector<PairRef> all_pairs(const std::vector<Sequence>& data);

// Loss of one pair: the mean of both frames' training losses.
template <typename T>
Tensor<T> pair_loss(const PairPrediction<T>& pred, const BinaryMask& mask_k, const BinaryMask& mask_k1);

// SGD with momentum and decoupled per-group learning rates:
// v <- m v + (g + wd p); p <- p - lr v.
template <typename T>
class Sgd {
 public:
    explicit Sgd(const TrainConfig& config) : config_(config) {}
    void step(ParamStore<T>& params, const std::vector<std::vector<T>>& grads);

 private:
    TrainConfig config_;
    std::vector<std::vector<T>> velocity_;
};

struct TrainLogRow {
    std::size_t iter = 0;
    double loss = 0;
    double probe_j = 0;
};

// Runs config.iterations SGD steps on mini-batches drawn (with a
// seed-determined shuffle) from every pair of `data`. `log` is called after
// each step.
template <typename T>
void train(ParamStore<T>& params, const ModelConfig& model, const std::vector<Sequence>& data,
           const TrainConfig& config, const std::function<void(const TrainLogRow&)>& log = {});

// Network outputs for every frame of a sequence. Each consecutive pair is
// predicted once; intermediate frames average the two predictions covering
// them. Maps are {1,h,w} probabilities.
template <typename T>
std::vector<Tensor<float>> propagate_inference(const ParamStore<T>& params, const ModelConfig& model,
                                               const Sequence& seq);

// Pixelwise mean of overlapping pair predictions; `pair_maps[t]` holds the
// maps for frames t and t+1.
std::vector<Tensor<float>> merge_pair_predictions(const std::vector<std::pair<Tensor<float>, Tensor<float>>>& pair_maps);

}  // namespace hcpn
