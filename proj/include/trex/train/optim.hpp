#pragma once

#include "trex/model/params.hpp"

#include <cstddef>
#include <vector>

namespace trex::train {

using model::ParamStore;
using nn::Tensor;

/// Bias-corrected Adam without weight decay.
template <class T>
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t step = 0;
    std::vector<std::vector<double>> m, v;  // mirror parameter shapes, flattened

    static AdamState for_params(const std::vector<Tensor<T>>& params);
};

/// One update from the gradients held by `params`. A non-finite gradient
/// throws nn::NumericError and leaves parameters and state untouched.
template <class T>
void adam_step(const std::vector<Tensor<T>>& params, AdamState<T>& state, double lr);

/// Global L2 norm over all gradients; rescales them to `max_norm` when above.
/// Returns the norm before clipping.
template <class T>
double clip_grad_norm(const std::vector<Tensor<T>>& params, double max_norm);

template <class T>
std::vector<Tensor<T>> parameter_list(const ParamStore<T>& store);

extern template struct AdamState<float>;
extern template struct AdamState<double>;

}  // namespace trex::train
