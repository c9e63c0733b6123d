#include "trex/model/dca.hpp"

#include <string>

namespace trex::model {

template <class T>
AttentionParams<T> AttentionParams<T>::create(ParamStore<T>& store, const std::string& prefix, std::size_t channels,
                                              std::size_t heads, std::mt19937_64& rng)
{
    if (heads == 0 || channels % heads) {
        throw ConfigError("attention width " + std::to_string(channels) + " not divisible by " +
                          std::to_string(heads) + " heads");
    }
    AttentionParams p;
    p.heads = heads;
    p.wq = store.add_normal(prefix + ".wq", {channels, channels}, rng);
    p.wk = store.add_normal(prefix + ".wk", {channels, channels}, rng);
    p.wv = store.add_normal(prefix + ".wv", {channels, channels}, rng);
    return p;
}

template <class T>
void AttentionParams<T>::validate() const
{
    const std::size_t c = wq.dim(0);
    for (const auto* w : {&wq, &wk, &wv}) {
        if (w->shape() != nn::Shape{c, c}) throw ConfigError("attention projections must be square and equal-sized");
    }
    if (heads == 0 || c % heads) {
        throw ConfigError("attention width " + std::to_string(c) + " not divisible by " + std::to_string(heads) +
                          " heads");
    }
}

template <class T>
LayerNormParams<T> LayerNormParams<T>::create(ParamStore<T>& store, const std::string& prefix, std::size_t channels)
{
    LayerNormParams p;
    p.gamma = store.add_constant(prefix + ".gamma", {channels}, T(1));
    p.beta = store.add_constant(prefix + ".beta", {channels}, T(0));
    return p;
}

template <class T>
CrossAttention<T> multi_head_cross_attention(const Tensor<T>& query_src, const Tensor<T>& kv_src,
                                             const AttentionParams<T>& p)
{
    p.validate();
    if (query_src.rank() != 2 || kv_src.rank() != 2 || query_src.dim(1) != p.channels() ||
        kv_src.dim(1) != p.channels()) {
        throw nn::DimensionError("cross attention: query " + nn::shape_str(query_src.shape()) + " and key/value " +
                                 nn::shape_str(kv_src.shape()) + " must both have " + std::to_string(p.channels()) +
                                 " channels");
    }
    const std::size_t n = query_src.dim(0), m = kv_src.dim(0), c = p.channels();
    const auto q = nn::reshape(nn::linear(query_src, p.wq, Tensor<T>{}), {1, n, c});
    const auto k = nn::reshape(nn::linear(kv_src, p.wk, Tensor<T>{}), {1, m, c});
    const auto v = nn::reshape(nn::linear(kv_src, p.wv, Tensor<T>{}), {1, m, c});
    auto result = nn::attention(q, k, v, p.heads);
    return {nn::reshape(result.output, {n, c}), nn::reshape(result.weights, {p.heads, n, m}).detach()};
}

template <class T>
DcaOutput<T> dual_cross_attention(const StageFeatures<T>& f_res, const StageFeatures<T>& f_fup,
                                  const AttentionParams<T>& res_queries, const AttentionParams<T>& fup_queries,
                                  const LayerNormParams<T>& ln_res, const LayerNormParams<T>& ln_fup)
{
    if (f_res.tensor.shape() != f_fup.tensor.shape()) {
        throw nn::DimensionError("dual cross-attention: feature grids differ: " + nn::shape_str(f_res.tensor.shape()) +
                                 " vs " + nn::shape_str(f_fup.tensor.shape()));
    }
    const std::size_t n = f_res.grid_h * f_res.grid_w, c = f_res.channels;
    const auto res_tokens = nn::reshape(f_res.tensor, {n, c});
    const auto fup_tokens = nn::reshape(f_fup.tensor, {n, c});
    auto ca_res = multi_head_cross_attention(res_tokens, fup_tokens, res_queries);
    auto ca_fup = multi_head_cross_attention(fup_tokens, res_tokens, fup_queries);
    const auto h_res = layer_norm(nn::mul(res_tokens, ca_res.output), ln_res);
    const auto h_fup = layer_norm(nn::mul(fup_tokens, ca_fup.output), ln_fup);
    DcaOutput<T> out;
    out.h_res = {f_res.grid_h, f_res.grid_w, c, nn::reshape(h_res, f_res.tensor.shape())};
    out.h_fup = {f_fup.grid_h, f_fup.grid_w, c, nn::reshape(h_fup, f_fup.tensor.shape())};
    out.ca_res = ca_res.output;
    out.ca_fup = ca_fup.output;
    out.attn_res2fup = ca_res.attn;
    out.attn_fup2res = ca_fup.attn;
    return out;
}

template <class T>
FusionHead<T> FusionHead<T>::create(ParamStore<T>& store, const std::string& prefix, std::size_t input_width,
                                    std::size_t hidden, double dropout, std::mt19937_64& rng)
{
    FusionHead h;
    h.dropout = dropout;
    h.fc1_w = store.add_normal(prefix + ".fc1.weight", {input_width, hidden}, rng);
    h.fc1_b = store.add_constant(prefix + ".fc1.bias", {hidden}, T(0));
    h.fc2_w = store.add_normal(prefix + ".fc2.weight", {hidden, 2}, rng);
    h.fc2_b = store.add_constant(prefix + ".fc2.bias", {2}, T(0));
    return h;
}

template <class T>
Tensor<T> FusionHead<T>::forward(const Tensor<T>& features, std::mt19937_64* dropout_rng) const
{
    if (features.numel() != input_width()) {
        throw nn::DimensionError("classification head expects width " + std::to_string(input_width()) + ", got " +
                                 nn::shape_str(features.shape()));
    }
    auto hidden = nn::relu(nn::linear(features, fc1_w, fc1_b));
    if (dropout_rng) hidden = nn::dropout(hidden, dropout, *dropout_rng);
    return nn::linear(hidden, fc2_w, fc2_b);
}

template <class T>
Tensor<T> trex_classify(const StageFeatures<T>& h_res, const StageFeatures<T>& h_fup, const StageFeatures<T>& f_fup,
                        double dt_norm, const FusionHead<T>& head, std::mt19937_64* dropout_rng)
{
    if (!(dt_norm >= 0.0 && dt_norm <= 1.0)) {
        throw ContractError("normalized time gap must lie in [0,1], got " + std::to_string(dt_norm));
    }
    const auto features = nn::concat<T>({global_avg_pool(h_res), global_avg_pool(h_fup), global_avg_pool(f_fup),
                                         Tensor<T>::scalar(static_cast<T>(dt_norm))});
    return head.forward(features, dropout_rng);
}

template <class T>
Tensor<T> cat_classify(const StageFeatures<T>& f_res, const StageFeatures<T>& f_fup, const FusionHead<T>& head,
                       std::mt19937_64* dropout_rng)
{
    if (f_res.channels != f_fup.channels) {
        throw nn::DimensionError("CAT head: channel mismatch " + std::to_string(f_res.channels) + " vs " +
                                 std::to_string(f_fup.channels));
    }
    return head.forward(nn::concat<T>({global_avg_pool(f_res), global_avg_pool(f_fup)}), dropout_rng);
}

template <class T>
Tensor<T> si_classify(const StageFeatures<T>& f, const FusionHead<T>& head, std::mt19937_64* dropout_rng)
{
    return head.forward(global_avg_pool(f), dropout_rng);
}

#define TREX_INSTANTIATE_DCA(T)                                                                                      \
    template struct AttentionParams<T>;                                                                              \
    template struct LayerNormParams<T>;                                                                              \
    template struct FusionHead<T>;                                                                                   \
    template CrossAttention<T> multi_head_cross_attention(const Tensor<T>&, const Tensor<T>&,                       \
                                                          const AttentionParams<T>&);                                \
    template DcaOutput<T> dual_cross_attention(const StageFeatures<T>&, const StageFeatures<T>&,                     \
                                               const AttentionParams<T>&, const AttentionParams<T>&,                 \
                                               const LayerNormParams<T>&, const LayerNormParams<T>&);                \
    template Tensor<T> trex_classify(const StageFeatures<T>&, const StageFeatures<T>&, const StageFeatures<T>&,      \
                                     double, const FusionHead<T>&, std::mt19937_64*);                                \
    template Tensor<T> cat_classify(const StageFeatures<T>&, const StageFeatures<T>&, const FusionHead<T>&,          \
                                    std::mt19937_64*);                                                               \
    template Tensor<T> si_classify(const StageFeatures<T>&, const FusionHead<T>&, std::mt19937_64*);

TREX_INSTANTIATE_DCA(float)
TREX_INSTANTIATE_DCA(double)

}  // namespace trex::model
