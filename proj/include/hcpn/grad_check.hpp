#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hcpn/tape.hpp"

namespace hcpn {

// A scalar-valued program of its inputs, built from the differentiable
// primitives so it can run both on and off a tape.
using ScalarProgram = std::function<Tensor<double>(const std::vector<Tensor<double>>& inputs)>;

struct GradCheckOptions {
    double eps = 1e-5;
    // Central differences are evaluated on at most this many elements of each
    // input (chosen deterministically from `seed`); 0 probes every element.
    std::size_t max_probes_per_input = 0;
    std::uint64_t seed = 0;
    // Corrupts the backward rules of nodes recorded in this tape scope.
    std::optional<std::string> fault_scope;
};

struct GradCheckResult {
    // max |analytic - numeric| / max(1, |numeric|) over probed elements.
    double max_rel_error = 0;
    std::size_t worst_input = 0;
    std::size_t worst_element = 0;
    double worst_analytic = 0;
    double worst_numeric = 0;
    std::size_t probes = 0;
};

// Compares reverse-mode gradients against central differences. Always 64-bit.
// Throws CorruptStateError naming the node if any intermediate is non-finite.
GradCheckResult grad_check(const ScalarProgram& fn, const std::vector<Tensor<double>>& inputs,
                           const GradCheckOptions& opts = {});

}  // namespace hcpn
