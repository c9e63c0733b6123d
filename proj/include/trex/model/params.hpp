#pragma once

#include "trex/nn/init.hpp"
#include "trex/nn/tensor.hpp"

#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace trex::model {

using nn::Shape;
using nn::Tensor;

/// Named trainable tensors in registration order (the checkpoint order).
template <class T>
class ParamStore {
public:
    Tensor<T> add(const std::string& name, const Shape& shape)
    {
        for (const auto& [existing, _] : items_) {
            if (existing == name) throw std::logic_error("duplicate parameter name: " + name);
        }
        Tensor<T> t(shape, true);
        items_.emplace_back(name, t);
        return t;
    }

    Tensor<T> add_normal(const std::string& name, const Shape& shape, std::mt19937_64& rng, double std = 0.02)
    {
        auto t = add(name, shape);
        nn::trunc_normal_(t, std, rng);
        return t;
    }

    Tensor<T> add_constant(const std::string& name, const Shape& shape, T value)
    {
        auto t = add(name, shape);
        nn::fill_(t, value);
        return t;
    }

    const std::vector<std::pair<std::string, Tensor<T>>>& items() const { return items_; }

    Tensor<T> get(const std::string& name) const
    {
        for (const auto& [existing, t] : items_) {
            if (existing == name) return t;
        }
        throw std::out_of_range("no parameter named " + name);
    }

    std::size_t count() const
    {
        std::size_t n = 0;
        for (const auto& item : items_) n += item.second.numel();
        return n;
    }

    void zero_grad()
    {
        for (auto& item : items_) item.second.zero_grad();
    }

private:
    std::vector<std::pair<std::string, Tensor<T>>> items_;
};

}  // namespace trex::model
