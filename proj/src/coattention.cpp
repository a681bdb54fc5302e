#include "hcpn/coattention.hpp"

#include <cmath>

#include "hcpn/ops.hpp"

namespace hcpn {
namespace {

template <typename T>
Tensor<T> conv1x1(const Tensor<T>& x, const ParamStore<T>& params, const std::string& name) {
    return conv2d(x, params.get(name + ".w"), &params.get(name + ".b"));
}

template <typename T>
Tape<T>* tape_of(const Tensor<T>& a, const ParamStore<T>& params) {
    return a.tape() ? a.tape() : params.tape();
}

}  // namespace

void CoattentionConfig::validate(std::size_t channels) const {
    if (heads == 0 || channels % heads != 0) {
        throw ConfigError(std::to_string(channels) + " channels cannot be split into " + std::to_string(heads) +
                          " heads");
    }
    if (reduction == 0 || channels % reduction != 0) {
        throw ConfigError("reduction " + std::to_string(reduction) + " does not divide " + std::to_string(channels) +
                          " channels");
    }
}

template <typename T>
void init_hcpn_block(ParamStore<T>& params, const std::string& prefix, std::size_t channels,
                     const CoattentionConfig& config, Rng& rng) {
    config.validate(channels);
    const std::size_t c = channels, cr = channels / config.reduction;
    const auto g = ParamGroup::Encoder;
    add_conv(params, rng, prefix + ".sa_app", g, 1, c, 1);
    add_conv(params, rng, prefix + ".sa_mot", g, 1, c, 1);
    params.add(prefix + ".P", g, fan_in_uniform<T>(rng, {c, c}, c));
    params.add(prefix + ".Q", g, fan_in_uniform<T>(rng, {c, c}, c));
    add_conv(params, rng, prefix + ".ca.reduce", g, cr, c, 1);
    add_conv(params, rng, prefix + ".ca.expand", g, c, cr, 1);
    switch (config.fusion) {
        case Fusion::Gaf:
            add_conv(params, rng, prefix + ".gaf.global1", g, cr, c, 1);
            add_conv(params, rng, prefix + ".gaf.global2", g, c, cr, 1);
            add_conv(params, rng, prefix + ".gaf.local1", g, cr, c, 1);
            add_conv(params, rng, prefix + ".gaf.local2", g, c, cr, 1);
            break;
        case Fusion::Concat:
            add_conv(params, rng, prefix + ".fuse", g, c, 2 * c, 1);
            break;
        case Fusion::Add:
            break;
    }
}

template <typename T>
void init_coattention(ParamStore<T>& params, const BackboneConfig& backbone, const CoattentionConfig& config,
                      Rng& rng) {
    backbone.validate();
    for (std::size_t l = 1; l <= backbone.levels; ++l) {
        const std::size_t c = backbone.level_channels(l);
        init_hcpn_block(params, "hcpn.l" + std::to_string(l), c, config, rng);
        if (l > 1) {
            const std::size_t prev = backbone.level_channels(l - 1);
            const std::string p = "carry.l" + std::to_string(l);
            add_conv(params, rng, p + ".app", ParamGroup::Encoder, c, prev, 3);
            add_conv(params, rng, p + ".mot", ParamGroup::Encoder, c, prev, 3);
        }
    }
}

template <typename T>
Tensor<T> soft_attention(const Tensor<T>& v, const ParamStore<T>& params, const std::string& prefix) {
    const std::size_t h = v.extent(1), w = v.extent(2), hw = h * w;
    const Tensor<T> logits = conv1x1(v, params, prefix).reshaped({1, hw});
    const Tensor<T> a = softmax(logits, Axis::Row).reshaped({1, h, w});
    return hadamard(v, add_scalar(scale(a, static_cast<T>(hw)), T{1}));
}

template <typename T>
PcmOutput<T> pcm_forward(const Tensor<T>& m, const Tensor<T>& n, const ParamStore<T>& params,
                         const std::string& prefix, const CoattentionConfig& config) {
    if (m.shape() != n.shape() || m.rank() != 3) {
        throw DimensionError("pcm_forward: appearance " + shape_str(m.shape()) + " and motion " +
                             shape_str(n.shape()) + " differ");
    }
    TapeScope<T> scope(common_tape({&m, &n}) ? common_tape({&m, &n}) : params.tape(), "coattention");
    if (config.bypass_pcm) return {m, n};
    const std::size_t c = m.extent(0), h = m.extent(1), w = m.extent(2), hw = h * w;
    config.validate(c);

    const Tensor<T> ma = soft_attention(m, params, prefix + ".sa_app").reshaped({c, hw});
    const Tensor<T> na = soft_attention(n, params, prefix + ".sa_mot").reshaped({c, hw});
    const T norm = static_cast<T>(1.0 / std::sqrt(static_cast<double>(c / config.heads)));
    const Tensor<T> pn = matmul(transpose(params.get(prefix + ".P")), na);
    const Tensor<T> qm = matmul(transpose(params.get(prefix + ".Q")), ma);
    const Tensor<T> s = scale(matmul(transpose(pn), qm), norm);

    const Tensor<T> m_hat = matmul(ma, softmax(s, Axis::Row));
    const Tensor<T> n_hat = matmul(na, softmax(s, Axis::Col));
    return {m_hat.reshaped({c, h, w}), n_hat.reshaped({c, h, w})};
}

template <typename T>
Tensor<T> channel_attention(const Tensor<T>& x, const ParamStore<T>& params, const std::string& prefix) {
    const Tensor<T> squeezed = relu(conv1x1(global_avg_pool(x), params, prefix + ".reduce"));
    return hadamard(x, sigmoid(conv1x1(squeezed, params, prefix + ".expand")));
}

template <typename T>
Tensor<T> ccm_forward(const Tensor<T>& n_hat, const Tensor<T>& n_hat_prime, const ParamStore<T>& params,
                      const std::string& prefix, const CoattentionConfig& config) {
    if (n_hat.shape() != n_hat_prime.shape()) {
        throw DimensionError("ccm_forward: inputs " + shape_str(n_hat.shape()) + " and " +
                             shape_str(n_hat_prime.shape()) + " differ");
    }
    TapeScope<T> scope(common_tape({&n_hat, &n_hat_prime}) ? common_tape({&n_hat, &n_hat_prime}) : params.tape(),
                       "coattention");
    if (config.bypass_ccm) return scale(add(n_hat, n_hat_prime), T{0.5});

    const Tensor<T> a = channel_attention(n_hat, params, prefix + ".ca");
    const Tensor<T> b = channel_attention(n_hat_prime, params, prefix + ".ca");
    switch (config.fusion) {
        case Fusion::Add:
            return add(a, b);
        case Fusion::Concat:
            return conv1x1(concat(std::vector<Tensor<T>>{a, b}), params, prefix + ".fuse");
        case Fusion::Gaf:
            break;
    }
    const Tensor<T> u = add(a, b);
    const Tensor<T> global =
        conv1x1(relu(conv1x1(global_avg_pool(u), params, prefix + ".gaf.global1")), params, prefix + ".gaf.global2");
    const Tensor<T> local = conv1x1(relu(conv1x1(u, params, prefix + ".gaf.local1")), params, prefix + ".gaf.local2");
    const Tensor<T> gate = sigmoid(add(local, global));
    return add(b, hadamard(gate, sub(a, b)));
}

template <typename T>
CascadeOutput<T> hcpn_cascade(const StreamFeatures<T>& streams, const ParamStore<T>& params,
                              const BackboneConfig& backbone, const CoattentionConfig& config) {
    const std::size_t levels = backbone.levels;
    if (streams.levels() != levels || streams.appearance_k.size() != levels || streams.appearance_k1.size() != levels) {
        throw ConfigError("cascade expects " + std::to_string(levels) + " levels, got " +
                          std::to_string(streams.levels()));
    }
    CascadeOutput<T> out;
    Tensor<T> prev_mk, prev_mk1, prev_fused;
    for (std::size_t l = 1; l <= levels; ++l) {
        const std::string p = "hcpn.l" + std::to_string(l);
        Tensor<T> mk = streams.appearance_k[l - 1];
        Tensor<T> mk1 = streams.appearance_k1[l - 1];
        Tensor<T> n = streams.motion[l - 1];
        if (l > 1) {
            TapeScope<T> scope(tape_of(prev_fused, params), "coattention");
            const std::string c = "carry.l" + std::to_string(l);
            const Conv2dOptions down{.stride = backbone.stem_stride};
            const Tensor<T>& wa = params.get(c + ".app.w");
            const Tensor<T>& ba = params.get(c + ".app.b");
            mk = add(mk, conv2d(prev_mk, wa, &ba, down));
            mk1 = add(mk1, conv2d(prev_mk1, wa, &ba, down));
            n = add(n, conv2d(prev_fused, params.get(c + ".mot.w"), &params.get(c + ".mot.b"), down));
        }
        const PcmOutput<T> k = pcm_forward(mk, n, params, p, config);
        const PcmOutput<T> k1 = pcm_forward(mk1, n, params, p, config);
        const Tensor<T> fused = ccm_forward(k.n_hat, k1.n_hat, params, p, config);
        {
            TapeScope<T> scope(tape_of(fused, params), "coattention");
            out.v_k.push_back(concat(std::vector<Tensor<T>>{fused, k.n_hat}));
            out.v_k1.push_back(concat(std::vector<Tensor<T>>{fused, k1.n_hat}));
        }
        prev_mk = k.m_hat;
        prev_mk1 = k1.m_hat;
        prev_fused = fused;
    }
    return out;
}

#define HCPN_INSTANTIATE_COATTENTION(T)                                                                               \
    template void init_hcpn_block(ParamStore<T>&, const std::string&, std::size_t, const CoattentionConfig&, Rng&);  \
    template void init_coattention(ParamStore<T>&, const BackboneConfig&, const CoattentionConfig&, Rng&);           \
    template Tensor<T> soft_attention(const Tensor<T>&, const ParamStore<T>&, const std::string&);                   \
    template PcmOutput<T> pcm_forward(const Tensor<T>&, const Tensor<T>&, const ParamStore<T>&, const std::string&,  \
                                      const CoattentionConfig&);                                                      \
    template Tensor<T> channel_attention(const Tensor<T>&, const ParamStore<T>&, const std::string&);                \
    template Tensor<T> ccm_forward(const Tensor<T>&, const Tensor<T>&, const ParamStore<T>&, const std::string&,     \
                                   const CoattentionConfig&);                                                         \
    template CascadeOutput<T> hcpn_cascade(const StreamFeatures<T>&, const ParamStore<T>&, const BackboneConfig&,    \
                                           const CoattentionConfig&);

HCPN_INSTANTIATE_COATTENTION(float)
HCPN_INSTANTIATE_COATTENTION(double)

}  // namespace hcpn
