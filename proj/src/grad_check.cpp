#include "hcpn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hcpn/random.hpp"

namespace hcpn {
namespace {

double evaluate(const ScalarProgram& fn, const std::vector<Tensor<double>>& inputs) {
    const Tensor<double> out = fn(inputs);
    if (out.numel() != 1) throw ContractError("grad_check program must return a scalar, got " + shape_str(out.shape()));
    const double v = out.item();
    if (!std::isfinite(v)) throw CorruptStateError("grad_check program produced a non-finite value off-tape");
    return v;
}

std::vector<std::size_t> probe_indices(std::size_t numel, std::size_t limit, Rng& rng) {
    std::vector<std::size_t> idx(numel);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (limit == 0 || limit >= numel) return idx;
    for (std::size_t i = 0; i < limit; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(numel - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(limit);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

GradCheckResult grad_check(const ScalarProgram& fn, const std::vector<Tensor<double>>& inputs,
                           const GradCheckOptions& opts) {
    Tape<double> tape;
    tape.set_check_finite(true);
    if (opts.fault_scope) tape.inject_fault(*opts.fault_scope, 1.5);

    std::vector<Tensor<double>> leaves;
    leaves.reserve(inputs.size());
    for (const auto& in : inputs) leaves.push_back(tape.watch(in));
    const Tensor<double> loss = fn(leaves);
    if (!loss.on_tape()) throw ContractError("grad_check program output does not depend on its inputs");
    tape.backward(loss);

    GradCheckResult result;
    Rng rng(opts.seed);
    std::vector<Tensor<double>> probe = inputs;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Tensor<double> analytic = tape.grad(leaves[k]);
        std::vector<double> values(inputs[k].values().begin(), inputs[k].values().end());
        for (std::size_t i : probe_indices(values.size(), opts.max_probes_per_input, rng)) {
            const double original = values[i];
            values[i] = original + opts.eps;
            probe[k] = Tensor<double>(inputs[k].shape(), values);
            const double up = evaluate(fn, probe);
            values[i] = original - opts.eps;
            probe[k] = Tensor<double>(inputs[k].shape(), values);
            const double down = evaluate(fn, probe);
            values[i] = original;

            const double numeric = (up - down) / (2 * opts.eps);
            const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
            ++result.probes;
            if (result.probes == 1 || err > result.max_rel_error) {
                result.max_rel_error = err;
                result.worst_input = k;
                result.worst_element = i;
                result.worst_analytic = analytic[i];
                result.worst_numeric = numeric;
            }
        }
        probe[k] = inputs[k];
    }
    return result;
}

}  // namespace hcpn
