#pragma once

#include "trex/nn/tensor.hpp"

#include <random>

namespace trex::nn {

/// Normal(0, std) resampled until inside ±2 std.
template <class T>
void trunc_normal_(Tensor<T>& t, double std, std::mt19937_64& rng)
{
    std::normal_distribution<double> dist(0.0, std);
    for (auto& v : t.mutable_values()) {
        double draw = dist(rng);
        while (std::abs(draw) > 2.0 * std) draw = dist(rng);
        v = static_cast<T>(draw);
    }
}

template <class T>
void fill_(Tensor<T>& t, T value)
{
    for (auto& v : t.mutable_values()) v = value;
}

}  // namespace trex::nn
