#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcpn/metrics.hpp"
#include "hcpn/train.hpp"

namespace hcpn {

// Everything a training or evaluation run depends on. Serialised as a flat
// JSON object whose keys match the command-line flags (with '_' for '-').
struct RunConfig {
    std::uint64_t seed = 0;
    int precision = 32;  // 32 or 64
    ModelConfig model;
    TrainConfig train;

    void validate() const;
    nlohmann::json to_json() const;
    // Overrides the keys present in `j`; unknown keys raise ConfigError.
    void merge(const nlohmann::json& j);
};

// Every sequence listed under `root`, in listing order.
std::vector<Sequence> load_dataset(const std::filesystem::path& root, const LoadOptions& options = {});

// Trained parameters in the configured precision (only one member is used).
struct ModelState {
    RunConfig config;
    ParamStore<float> f32;
    ParamStore<double> f64;
};

ModelState init_state(const RunConfig& config);

ModelState train_model(const RunConfig& config, const std::vector<Sequence>& data,
                       const std::function<void(const TrainLogRow&)>& log = {});

// Blob plus JSON sidecar holding the run configuration.
void save_model(const ModelState& state, const std::filesystem::path& blob);

// Rebuilds the model from the sidecar and loads the blob. A `precision`
// other than 0 overrides the stored one.
ModelState load_model(const std::filesystem::path& blob, int precision = 0);

// Per-frame foreground probabilities ({1,h,w}).
std::vector<Tensor<float>> predict_sequence(const ModelState& state, const Sequence& seq);

// Thresholded predictions scored against the sequence's ground truth.
SequenceEval evaluate_prediction(const Sequence& seq, const std::vector<BinaryMask>& preds);

std::vector<BinaryMask> threshold_all(const std::vector<Tensor<float>>& maps);

// Predicts and scores every sequence.
std::vector<SequenceEval> evaluate_model(const ModelState& state, const std::vector<Sequence>& data);

}  // namespace hcpn
