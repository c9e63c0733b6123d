#pragma once

#include "trex/nn/tensor.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace trex::nn {

using GradCheckFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

struct GradCheckOptions {
    double eps = 1e-6;
    // Denominator floor: |analytic - numeric| / max(|analytic|, |numeric|, abs_floor).
    double abs_floor = 1e-4;
    // 0 probes every element; otherwise a seeded random subset per input.
    std::size_t max_probes_per_input = 0;
    std::uint64_t seed = 0x5eedULL;
    // Five-point stencil; truncation error O(eps^4) instead of O(eps^2).
    bool fourth_order = false;
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    double max_absolute_error = 0.0;
    std::size_t probes = 0;
};

/// Compares reverse-mode gradients of a random projection of op(inputs)
/// against central finite differences. Inputs are perturbed in place, so the
/// op may also close over the same tensors (e.g. model parameters).
GradCheckReport grad_check_report(const GradCheckFn& op, std::vector<Tensor<double>> inputs,
                                  const GradCheckOptions& options = {});

double grad_check(const GradCheckFn& op, std::vector<Tensor<double>> inputs, double eps = 1e-6);

}  // namespace trex::nn
