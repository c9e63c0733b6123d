#pragma once

#include "trex/nn/tensor.hpp"

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <vector>

namespace trex::nn {

template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
/// Element-wise (Hadamard) product.
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <class T> Tensor<T> relu(const Tensor<T>& x);
/// Exact (erf) GELU.
template <class T> Tensor<T> gelu(const Tensor<T>& x);

/// y = x W + b over the trailing axis of x; `bias` may be undefined.
template <class T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

/// Numerically stable softmax along `axis` (max subtraction).
template <class T> Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

/// Normalizes the trailing axis to zero mean / unit population variance, then gamma*x+beta.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps);

template <class T>
struct AttentionResult {
    Tensor<T> output;   // [B,N,C], heads concatenated
    Tensor<T> weights;  // [B,h,N,M], detached, rows sum to 1
};

/// Multi-head scaled dot-product attention over already-projected q, k, v.
///
/// q: [B,N,C], k and v: [B,M,C]; head j uses channel slice [j*C/h, (j+1)*C/h).
/// `mask` is an optional additive constant of B*N*M or N*M entries; `bias`
/// an optional learnable [h,N,M] table shared over the batch.
template <class T>
AttentionResult<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads,
                             std::span<const T> mask = {}, const Tensor<T>& bias = {});

using GatherIndex = std::shared_ptr<const std::vector<std::int64_t>>;

/// out.flat[i] = x.flat[index[i]], or 0 where index[i] < 0.
/// Window partitioning, cyclic shifts, padding and cropping are all gathers.
template <class T> Tensor<T> gather(const Tensor<T>& x, const GatherIndex& index, Shape out_shape);

template <class T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// Mean over every axis but the last: [..., C] -> [C].
template <class T> Tensor<T> mean_rows(const Tensor<T>& x);

/// Concatenates along the trailing axis; leading extents must agree.
template <class T> Tensor<T> concat(const std::vector<Tensor<T>>& parts);

template <class T> Tensor<T> sum(const Tensor<T>& x);

/// Inverted dropout; identity when `rate` is 0.
template <class T> Tensor<T> dropout(const Tensor<T>& x, double rate, std::mt19937_64& rng);

/// -log softmax(logits)[label] for a single logit vector.
template <class T> Tensor<T> cross_entropy(const Tensor<T>& logits, std::size_t label);

}  // namespace trex::nn
