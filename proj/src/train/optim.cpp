#include "trex/train/optim.hpp"

#include <cmath>
#include <string>

namespace trex::train {

template <class T>
AdamState<T> AdamState<T>::for_params(const std::vector<Tensor<T>>& params)
{
    AdamState s;
    for (const auto& p : params) {
        s.m.emplace_back(p.numel(), 0.0);
        s.v.emplace_back(p.numel(), 0.0);
    }
    return s;
}

template <class T>
void adam_step(const std::vector<Tensor<T>>& params, AdamState<T>& state, double lr)
{
    if (params.size() != state.m.size()) {
        throw std::invalid_argument("adam: state tracks " + std::to_string(state.m.size()) + " tensors, got " +
                                    std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].numel() != state.m[i].size()) throw std::invalid_argument("adam: moment shape mismatch at tensor " + std::to_string(i));
        if (!params[i].has_grad()) continue;
        for (T g : params[i].grad()) {
            if (!std::isfinite(g)) throw nn::NumericError("adam: non-finite gradient in tensor " + std::to_string(i));
        }
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i];
        auto& m = state.m[i];
        auto& v = state.v[i];
        const bool has = p.has_grad();
        const auto* g = has ? p.grad().data() : nullptr;
        auto w = p.mutable_values();
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double gj = has ? static_cast<double>(g[j]) : 0.0;
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
            const double mhat = m[j] / c1, vhat = v[j] / c2;
            w[j] = static_cast<T>(static_cast<double>(w[j]) - lr * mhat / (std::sqrt(vhat) + state.eps));
        }
    }
}

template <class T>
double clip_grad_norm(const std::vector<Tensor<T>>& params, double max_norm)
{
    double sq = 0.0;
    for (const auto& p : params) {
        if (!p.has_grad()) continue;
        for (T g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0 && norm > max_norm) {
        const double f = max_norm / (norm + 1e-6);
        for (auto p : params) {
            if (!p.has_grad()) continue;
            for (auto& g : p.mutable_grad()) g = static_cast<T>(g * f);
        }
    }
    return norm;
}

template <class T>
std::vector<Tensor<T>> parameter_list(const ParamStore<T>& store)
{
    std::vector<Tensor<T>> out;
    for (const auto& item : store.items()) out.push_back(item.second);
    return out;
}

#define TREX_INSTANTIATE(T)                                                                       \
    template struct AdamState<T>;                                                                 \
    template void adam_step<T>(const std::vector<Tensor<T>>&, AdamState<T>&, double);             \
    template double clip_grad_norm<T>(const std::vector<Tensor<T>>&, double);                     \
    template std::vector<Tensor<T>> parameter_list<T>(const ParamStore<T>&);
TREX_INSTANTIATE(float)
TREX_INSTANTIATE(double)
#undef TREX_INSTANTIATE

}  // namespace trex::train
