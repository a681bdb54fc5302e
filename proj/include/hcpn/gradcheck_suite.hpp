#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hcpn {

struct ModuleGradCheck {
    std::string module;  // tape scope name, e.g. "coattention"
    std::string what;    // probed program and shape
    double max_rel_error = 0;
    std::size_t probes = 0;
    bool passed = false;
};

struct GradCheckSuiteOptions {
    std::uint64_t seed = 0;
    double tolerance = 1e-4;
    // Corrupts the backward rules recorded under this module's scope.
    std::optional<std::string> fault_module;
};

// 64-bit central-difference checks at small shapes: every tensor primitive,
// the backbone, one co-attention block at 8x8x4, the bridge at 4x4x6 and
// decoder + loss at 16x16.
std::vector<ModuleGradCheck> run_gradcheck_suite(const GradCheckSuiteOptions& options = {});

// Scope names accepted by `fault_module`.
const std::vector<std::string>& gradcheck_modules();

}  // namespace hcpn
