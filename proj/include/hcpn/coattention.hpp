#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "hcpn/encoder.hpp"
#include "hcpn/params.hpp"

namespace hcpn {

enum class Fusion { Gaf, Add, Concat };

struct CoattentionConfig {
    std::size_t heads = 4;
    std::size_t reduction = 4;
    Fusion fusion = Fusion::Gaf;
    bool bypass_pcm = false;
    bool bypass_ccm = false;

    void validate(std::size_t channels) const;
};

// Parameters of one cascade level live under "hcpn.l<l>."; the projections
// that carry level l-1 outputs into level l live under "carry.l<l>.".
template <typename T>
void init_hcpn_block(ParamStore<T>& params, const std::string& prefix, std::size_t channels,
                     const CoattentionConfig& config, Rng& rng);

template <typename T>
void init_coattention(ParamStore<T>& params, const BackboneConfig& backbone, const CoattentionConfig& config, Rng& rng);

// V * (1 + HW * a) where a is the spatial softmax of a 1x1-conv logit map.
template <typename T>
Tensor<T> soft_attention(const Tensor<T>& v, const ParamStore<T>& params, const std::string& prefix);

template <typename T>
struct PcmOutput {
    Tensor<T> m_hat;
    Tensor<T> n_hat;
};

// Parallel co-attention of appearance `m` and motion `n` ({C,H,W} each).
// After soft attention both are flattened to {C,HW};
// S = (P^T N)^T (Q^T M) / sqrt(C/h), M^ = M softmax_rows(S),
// N^ = N softmax_cols(S).
template <typename T>
PcmOutput<T> pcm_forward(const Tensor<T>& m, const Tensor<T>& n, const ParamStore<T>& params,
                         const std::string& prefix, const CoattentionConfig& config);

// Squeeze-and-excitation style channel gate.
template <typename T>
Tensor<T> channel_attention(const Tensor<T>& x, const ParamStore<T>& params, const std::string& prefix);

// Cross co-attention: fuses the two frames' motion-attended maps.
template <typename T>
Tensor<T> ccm_forward(const Tensor<T>& n_hat, const Tensor<T>& n_hat_prime, const ParamStore<T>& params,
                      const std::string& prefix, const CoattentionConfig& config);

template <typename T>
struct CascadeOutput {
    // Per level (index 0 = level 1), {2C_l, H_l, W_l}.
    std::vector<Tensor<T>> v_k;
    std::vector<Tensor<T>> v_k1;
};

template <typename T>
CascadeOutput<T> hcpn_cascade(const StreamFeatures<T>& streams, const ParamStore<T>& params,
                              const BackboneConfig& backbone, const CoattentionConfig& config);

}  // namespace hcpn
