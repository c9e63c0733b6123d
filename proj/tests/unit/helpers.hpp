#pragma once

#include "trex/nn/tensor.hpp"

#include <random>

namespace trex::test {

inline nn::Tensor<double> random_tensor(const nn::Shape& shape, std::mt19937_64& rng, double scale = 1.0)
{
    std::normal_distribution<double> dist(0.0, scale);
    std::vector<double> v(nn::shape_numel(shape));
    for (auto& x : v) x = dist(rng);
    return nn::Tensor<double>(shape, std::move(v));
}

template <class T>
void set_values(nn::Tensor<T>& t, std::initializer_list<T> values)
{
    auto dst = t.mutable_values();
    REQUIRE(dst.size() == values.size());
    std::copy(values.begin(), values.end(), dst.begin());
}

inline void copy_values(nn::Tensor<double>& dst, const nn::Tensor<double>& src)
{
    REQUIRE(dst.numel() == src.numel());
    std::copy(src.values().begin(), src.values().end(), dst.mutable_values().begin());
}

}  // namespace trex::test
