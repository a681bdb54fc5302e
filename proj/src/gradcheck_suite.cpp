#include "hcpn/gradcheck_suite.hpp"

#include <algorithm>
#include <functional>

#include "hcpn/grad_check.hpp"
#include "hcpn/model.hpp"
#include "hcpn/ops.hpp"

namespace hcpn {
namespace {

using TD = Tensor<double>;

struct Program {
    std::string what;
    ScalarProgram fn;
    std::vector<TD> inputs;
    std::size_t probes = 0;
};

TD weighted(const TD& y, const TD& w) { return sum(hadamard(y, w)); }

std::vector<TD> values_of(const ParamStore<double>& p) {
    std::vector<TD> out;
    for (const auto& e : p.entries()) out.push_back(e.value);
    return out;
}

ParamStore<double> store_from(const ParamStore<double>& like, const std::vector<TD>& in, std::size_t offset) {
    return like.with_values(std::vector<TD>(in.begin() + static_cast<long>(offset),
                                            in.begin() + static_cast<long>(offset + like.size())));
}

// Runs `fn` under the named scope so fault injection can target it.
ScalarProgram scoped(std::string scope, ScalarProgram fn) {
    return [scope = std::move(scope), fn = std::move(fn)](const std::vector<TD>& in) {
        TapeScope<double> guard(in.front().tape(), scope);
        return fn(in);
    };
}

std::vector<Program> primitive_programs(Rng& rng) {
    auto u = [&](Shape s) { return rng.uniform_tensor<double>(std::move(s), -1, 1); };
    const TD w35 = u({3, 5}), w243 = u({2, 4, 3}), w355 = u({3, 5, 5}), w333 = u({3, 3, 3});
    const TD w211 = u({2, 1, 1}), w256 = u({2, 5, 6}), w244 = u({2, 4, 4}), w343 = u({3, 4, 3});
    std::vector<double> bits(16);
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = i % 3 == 0 ? 1.0 : 0.0;
    const TD target({1, 4, 4}, bits);

    std::vector<Program> p = {
        {"matmul 3x4.4x5", [=](const auto& in) { return weighted(matmul(in[0], in[1]), w35); }, {u({3, 4}), u({4, 5})}},
        {"transpose 5x3", [=](const auto& in) { return weighted(transpose(in[0]), w35); }, {u({5, 3})}},
        {"softmax rows 3x5", [=](const auto& in) { return weighted(softmax(in[0], Axis::Row), w35); }, {u({3, 5})}},
        {"softmax cols 3x5", [=](const auto& in) { return weighted(softmax(in[0], Axis::Col), w35); }, {u({3, 5})}},
        {"conv2d 3x3", [=](const auto& in) { return weighted(conv2d(in[0], in[1], &in[2]), w355); },
         {u({2, 5, 5}), u({3, 2, 3, 3}), u({3})}},
        {"conv2d stride 2 dilation 2",
         [=](const auto& in) { return weighted(conv2d(in[0], in[1], &in[2], Conv2dOptions{2, 2, Padding::Same}), w333); },
         {u({2, 6, 6}), u({3, 2, 3, 3}), u({3})}},
        {"global_avg_pool", [=](const auto& in) { return weighted(global_avg_pool(in[0]), w211); }, {u({2, 3, 4})}},
        {"resize_bilinear up", [=](const auto& in) { return weighted(resize_bilinear(in[0], 5, 6), w256); }, {u({2, 3, 2})}},
        {"resize_bilinear down", [=](const auto& in) { return weighted(resize_bilinear(in[0], 4, 4), w244); }, {u({2, 7, 5})}},
        {"normalize l2", [=](const auto& in) { return weighted(normalize(in[0], NormMode::L2Channel), w243); }, {u({2, 4, 3})}},
        {"normalize per position", [=](const auto& in) { return weighted(normalize(in[0], NormMode::ChannelPos), w243); },
         {u({2, 4, 3})}},
        {"add/sub/hadamard broadcast",
         [=](const auto& in) { return weighted(hadamard(sub(add(in[0], in[1]), in[2]), in[1]), w243); },
         {u({2, 4, 3}), u({2, 1, 1}), u({1, 4, 3})}},
        {"scale, shift, sigmoid, tanh, relu",
         [=](const auto& in) {
             const TD x = add_scalar(scale(in[0], 1.7), -0.3);
             return add(add(weighted(sigmoid(x), w243), weighted(hcpn::tanh(x), w243)), weighted(relu(x), w243));
         },
         {u({2, 4, 3})}},
        {"max_with_constant", [=](const auto& in) { return weighted(max_with_constant(in[0], w243), w243); }, {u({2, 4, 3})}},
        {"concat/slice", [=](const auto& in) { return weighted(slice(concat<double>({in[0], in[1]}), 1, 4), w343); },
         {u({2, 4, 3}), u({2, 4, 3})}},
        {"mean", [=](const auto& in) { return mean(hadamard(in[0], in[0])); }, {u({2, 4, 3})}},
        {"binary_cross_entropy", [=](const auto& in) { return binary_cross_entropy(in[0], target); },
         {rng.uniform_tensor<double>({1, 4, 4}, 0.05, 0.95)}},
    };
    for (auto& prog : p) prog.fn = scoped("tensor_core", std::move(prog.fn));
    return p;
}

Program encoder_program(Rng& rng) {
    BackboneConfig cfg;
    cfg.levels = 2;
    cfg.channels = {2, 4};
    cfg.width = cfg.height = 8;
    ParamStore<double> ps;
    init_encoder(ps, cfg, rng);
    std::vector<TD> inputs;
    for (int i = 0; i < 3; ++i) inputs.push_back(rng.uniform_tensor<double>({3, 8, 8}, 0, 1));
    std::vector<TD> weights;
    for (std::size_t l = 1; l <= 2; ++l) {
        for (int s = 0; s < 3; ++s) {
            weights.push_back(
                rng.uniform_tensor<double>({cfg.level_channels(l), cfg.level_height(l), cfg.level_width(l)}, -1, 1));
        }
    }
    for (const TD& v : values_of(ps)) inputs.push_back(v);
    return {"backbone 8x8, 2 levels",
            [=](const std::vector<TD>& in) {
                const auto f = encode_streams(in[0], in[1], in[2], store_from(ps, in, 3), cfg);
                TD total = TD::scalar(0);
                for (std::size_t l = 0; l < 2; ++l) {
                    total = add(total, weighted(f.appearance_k[l], weights[3 * l]));
                    total = add(total, weighted(f.motion[l], weights[3 * l + 1]));
                    total = add(total, weighted(f.appearance_k1[l], weights[3 * l + 2]));
                }
                return total;
            },
            inputs, 16};
}

Program block_program(Rng& rng) {
    CoattentionConfig cfg;
    ParamStore<double> ps;
    init_hcpn_block(ps, "b", 4, cfg, rng);
    const Shape s{4, 8, 8};
    std::vector<TD> inputs{rng.uniform_tensor<double>(s, -1, 1), rng.uniform_tensor<double>(s, -1, 1),
                           rng.uniform_tensor<double>(s, -1, 1)};
    const TD wa = rng.uniform_tensor<double>(s, -1, 1), wb = rng.uniform_tensor<double>(s, -1, 1);
    const TD wc = rng.uniform_tensor<double>(s, -1, 1);
    for (const TD& v : values_of(ps)) inputs.push_back(v);
    return {"co-attention block 8x8x4",
            [=](const std::vector<TD>& in) {
                const ParamStore<double> p = store_from(ps, in, 3);
                const auto k = pcm_forward(in[0], in[2], p, "b", cfg);
                const auto k1 = pcm_forward(in[1], in[2], p, "b", cfg);
                const TD fused = ccm_forward(k.n_hat, k1.n_hat, p, "b", cfg);
                return add(add(weighted(fused, wa), weighted(k.m_hat, wb)), weighted(k1.n_hat, wc));
            },
            inputs, 24};
}

Program gac_program(Rng& rng) {
    const TD w = rng.uniform_tensor<double>({6, 4, 4}, -1, 1);
    return {"bridge 4x4x6",
            [=](const std::vector<TD>& in) { return weighted(gac_forward(in[0], in[1], in[2], in[3]), w); },
            {rng.uniform_tensor<double>({6, 4, 4}, -1, 1), rng.uniform_tensor<double>({6}, -2, 2),
             rng.uniform_tensor<double>({6}, -2, 2), rng.uniform_tensor<double>({6}, -1, 1)}};
}

Program decoder_program(Rng& rng) {
    BackboneConfig backbone;
    backbone.levels = 2;
    backbone.channels = {4, 8};
    backbone.width = backbone.height = 16;
    DecoderConfig dec;
    dec.width = 8;
    ParamStore<double> ps;
    init_decoder(ps, backbone, dec, rng);
    // Heads start at zero; perturb them so every path carries gradient.
    for (const auto& e : std::vector(ps.entries())) {
        if (e.name.find("contour") != std::string::npos || e.name.find("dec.mask") != std::string::npos)
            ps.set(e.name, rng.uniform_tensor<double>(e.value.shape(), -0.5, 0.5));
    }
    std::vector<TD> inputs;
    for (std::size_t l = 1; l <= 2; ++l) {
        inputs.push_back(rng.uniform_tensor<double>(
            {2 * backbone.level_channels(l), backbone.level_height(l), backbone.level_width(l)}, -1, 1));
    }
    BinaryMask gt(16, 16);
    for (std::size_t y = 4; y < 11; ++y)
        for (std::size_t x = 5; x < 12; ++x) gt.at(y, x) = 1;
    const TD gm = to_tensor<double>(gt), gr = to_tensor<double>(contour_from_mask(gt));
    for (const TD& v : values_of(ps)) inputs.push_back(v);
    return {"decoder + refinement + loss 16x16",
            [=](const std::vector<TD>& in) {
                const auto out = decode_masks(std::vector<TD>{in[0], in[1]}, store_from(ps, in, 2), backbone, dec);
                return training_loss(mcr_refine(out.coarse, out.contours), out.contours, gm, gr);
            },
            inputs, 12};
}

}  // namespace

const std::vector<std::string>& gradcheck_modules() {
    static const std::vector<std::string> names{"tensor_core", "encoder", "coattention", "bridge_gac", "decoder_mcr"};
    return names;
}

std::vector<ModuleGradCheck> run_gradcheck_suite(const GradCheckSuiteOptions& options) {
    if (options.fault_module &&
        std::find(gradcheck_modules().begin(), gradcheck_modules().end(), *options.fault_module) ==
            gradcheck_modules().end()) {
        throw ConfigError("unknown module '" + *options.fault_module + "'");
    }
    Rng rng(options.seed);
    std::vector<std::pair<std::string, std::vector<Program>>> groups;
    groups.emplace_back("tensor_core", primitive_programs(rng));
    groups.emplace_back("encoder", std::vector<Program>{encoder_program(rng)});
    groups.emplace_back("coattention", std::vector<Program>{block_program(rng)});
    groups.emplace_back("bridge_gac", std::vector<Program>{gac_program(rng)});
    groups.emplace_back("decoder_mcr", std::vector<Program>{decoder_program(rng)});

    std::vector<ModuleGradCheck> out;
    for (const auto& [module, programs] : groups) {
        ModuleGradCheck r;
        r.module = module;
        r.what = programs.size() == 1 ? programs.front().what : std::to_string(programs.size()) + " primitives";
        for (const auto& p : programs) {
            GradCheckOptions opts;
            opts.max_probes_per_input = p.probes;
            opts.seed = options.seed;
            opts.fault_scope = options.fault_module;
            const GradCheckResult g = grad_check(p.fn, p.inputs, opts);
            r.max_rel_error = std::max(r.max_rel_error, g.max_rel_error);
            r.probes += g.probes;
        }
        r.passed = r.max_rel_error < options.tolerance;
        out.push_back(r);
    }
    return out;
}

}  // namespace hcpn
