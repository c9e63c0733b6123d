#pragma once

#include "trex/model/encoder.hpp"

#include <random>

namespace trex::model {

/// Square C x C projections for one attention direction (no output projection).
template <class T>
struct AttentionParams {
    Tensor<T> wq, wk, wv;
    std::size_t heads = 8;

    static AttentionParams create(ParamStore<T>& store, const std::string& prefix, std::size_t channels,
                                  std::size_t heads, std::mt19937_64& rng);
    std::size_t channels() const { return wq.dim(0); }
    std::size_t head_dim() const { return channels() / heads; }
    void validate() const;
};

template <class T>
struct LayerNormParams {
    Tensor<T> gamma, beta;
    double eps = 1e-5;

    static LayerNormParams create(ParamStore<T>& store, const std::string& prefix, std::size_t channels);
};

template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const LayerNormParams<T>& p)
{
    return nn::layer_norm(x, p.gamma, p.beta, p.eps);
}

template <class T>
struct CrossAttention {
    Tensor<T> output;  // [N,C]
    Tensor<T> attn;    // [h,N,M], rows sum to 1
};

/// Queries from `query_src` [N,C] attend over `kv_src` [M,C].
template <class T>
CrossAttention<T> multi_head_cross_attention(const Tensor<T>& query_src, const Tensor<T>& kv_src,
                                             const AttentionParams<T>& p);

template <class T>
struct DcaOutput {
    StageFeatures<T> h_res, h_fup;
    Tensor<T> ca_res, ca_fup;              // [N,C] cross-attended features before fusion
    Tensor<T> attn_res2fup, attn_fup2res;  // [h,N,N]
};

/// Bidirectional cross-attention over flattened Stage-4 grids followed by
/// H = LayerNorm(F ⊙ CA(F)) in each direction.
template <class T>
DcaOutput<T> dual_cross_attention(const StageFeatures<T>& f_res, const StageFeatures<T>& f_fup,
                                  const AttentionParams<T>& res_queries, const AttentionParams<T>& fup_queries,
                                  const LayerNormParams<T>& ln_res, const LayerNormParams<T>& ln_fup);

/// Linear -> ReLU -> dropout -> Linear producing two logits (CR, LR).
template <class T>
struct FusionHead {
    Tensor<T> fc1_w, fc1_b, fc2_w, fc2_b;
    double dropout = 0.1;

    static FusionHead create(ParamStore<T>& store, const std::string& prefix, std::size_t input_width,
                             std::size_t hidden, double dropout, std::mt19937_64& rng);
    std::size_t input_width() const { return fc1_w.dim(0); }
    /// `dropout_rng` null means inference (dropout off).
    Tensor<T> forward(const Tensor<T>& features, std::mt19937_64* dropout_rng) const;
};

class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// [GP(H_res), GP(H_fup), GP(F_fup), dt] -> logits.
template <class T>
Tensor<T> trex_classify(const StageFeatures<T>& h_res, const StageFeatures<T>& h_fup, const StageFeatures<T>& f_fup,
                        double dt_norm, const FusionHead<T>& head, std::mt19937_64* dropout_rng = nullptr);

template <class T>
Tensor<T> trex_classify(const DcaOutput<T>& dca, const StageFeatures<T>& f_fup, double dt_norm,
                        const FusionHead<T>& head, std::mt19937_64* dropout_rng = nullptr)
{
    return trex_classify(dca.h_res, dca.h_fup, f_fup, dt_norm, head, dropout_rng);
}

/// [GP(F_res), GP(F_fup)] -> logits.
template <class T>
Tensor<T> cat_classify(const StageFeatures<T>& f_res, const StageFeatures<T>& f_fup, const FusionHead<T>& head,
                       std::mt19937_64* dropout_rng = nullptr);

/// GP(F) -> logits.
template <class T>
Tensor<T> si_classify(const StageFeatures<T>& f, const FusionHead<T>& head, std::mt19937_64* dropout_rng = nullptr);

template <class T>
Tensor<T> global_avg_pool(const StageFeatures<T>& f)
{
    return nn::mean_rows(f.tensor);
}

}  // namespace trex::model
