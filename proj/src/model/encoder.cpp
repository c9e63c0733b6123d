#include "trex/model/encoder.hpp"

#include <string>

namespace trex::model {

using nn::GatherIndex;

EncoderConfig EncoderConfig::named(std::string_view name)
{
    EncoderConfig cfg;
    if (name == "toy") return cfg;
    if (name == "tiny" || name == "swin-tiny") {
        cfg.depths = {2, 2, 6, 2};
        cfg.dims = {96, 192, 384, 768};
        cfg.heads = {3, 6, 12, 24};
    } else if (name == "small" || name == "swin-small") {
        cfg.depths = {2, 2, 18, 2};
        cfg.dims = {96, 192, 384, 768};
        cfg.heads = {3, 6, 12, 24};
    } else {
        throw ConfigError("unknown encoder config '" + std::string(name) + "'");
    }
    if (name.starts_with("swin-")) {
        cfg.input_h = cfg.input_w = 224;
        cfg.window = 7;
    }
    return cfg;
}

void EncoderConfig::validate() const
{
    if (patch == 0 || window == 0) throw ConfigError("patch and window must be positive");
    if (input_h % patch || input_w % patch) {
        throw ConfigError("input " + std::to_string(input_h) + "x" + std::to_string(input_w) +
                          " not divisible by patch " + std::to_string(patch));
    }
    for (std::size_t s = 0; s < 3; ++s) {
        if (stage_grid_h(s) % 2 || stage_grid_w(s) % 2 || stage_grid_h(s) == 0 || stage_grid_w(s) == 0) {
            throw ConfigError("stage " + std::to_string(s + 1) + " token grid " + std::to_string(stage_grid_h(s)) +
                              "x" + std::to_string(stage_grid_w(s)) + " cannot be merged (odd extent)");
        }
    }
    for (std::size_t s = 0; s < 4; ++s) {
        if (heads[s] == 0 || dims[s] % heads[s]) {
            throw ConfigError("stage " + std::to_string(s + 1) + " width " + std::to_string(dims[s]) +
                              " not divisible by heads " + std::to_string(heads[s]));
        }
        if (s && dims[s] != 2 * dims[s - 1]) throw ConfigError("stage widths must double between stages");
    }
    if (mlp_ratio == 0) throw ConfigError("mlp_ratio must be positive");
}

WindowGeometry WindowGeometry::make(std::size_t grid_h, std::size_t grid_w, std::size_t channels, std::size_t window,
                                    std::size_t shift)
{
    if (window == 0) throw ConfigError("window must be positive");
    if (shift >= window) {
        throw ConfigError("shift " + std::to_string(shift) + " must be smaller than window " + std::to_string(window));
    }
    WindowGeometry g;
    g.grid_h = grid_h;
    g.grid_w = grid_w;
    g.window = window;
    g.shift = shift;
    g.channels = channels;
    g.padded_h = (grid_h + window - 1) / window * window;
    g.padded_w = (grid_w + window - 1) / window * window;
    const std::size_t wins_h = g.padded_h / window;
    const std::size_t wins_w = g.padded_w / window;
    g.num_windows = wins_h * wins_w;
    const std::size_t tokens = window * window;

    // Window layout position p (in the shifted, padded frame) reads source
    // row (p + shift) mod padded; rows beyond the real grid are padding.
    auto partition = std::make_shared<std::vector<std::int64_t>>(g.num_windows * tokens * channels);
    auto reverse = std::make_shared<std::vector<std::int64_t>>(grid_h * grid_w * channels);
    std::vector<bool> is_pad(g.num_windows * tokens, false);
    for (std::size_t wy = 0; wy < wins_h; ++wy) {
        for (std::size_t wx = 0; wx < wins_w; ++wx) {
            const std::size_t win = wy * wins_w + wx;
            for (std::size_t ty = 0; ty < window; ++ty) {
                for (std::size_t tx = 0; tx < window; ++tx) {
                    const std::size_t tok = ty * window + tx;
                    const std::size_t sy = (wy * window + ty + shift) % g.padded_h;
                    const std::size_t sx = (wx * window + tx + shift) % g.padded_w;
                    const bool pad = sy >= grid_h || sx >= grid_w;
                    is_pad[win * tokens + tok] = pad;
                    for (std::size_t c = 0; c < channels; ++c) {
                        (*partition)[(win * tokens + tok) * channels + c] =
                            pad ? -1 : static_cast<std::int64_t>((sy * grid_w + sx) * channels + c);
                        if (!pad) {
                            (*reverse)[(sy * grid_w + sx) * channels + c] =
                                static_cast<std::int64_t>((win * tokens + tok) * channels + c);
                        }
                    }
                }
            }
        }
    }
    g.partition = partition;
    g.reverse = reverse;

    const bool has_pad = g.padded_h != grid_h || g.padded_w != grid_w;
    if (shift == 0 && !has_pad) return g;

    // Region labels follow the usual shifted-window slicing of the padded frame.
    auto region = [&](std::size_t p, std::size_t extent) -> std::size_t {
        if (shift == 0) return 0;
        if (p < extent - window) return 0;
        if (p < extent - shift) return 1;
        return 2;
    };
    constexpr double kMasked = -1e9;
    g.mask_d.assign(g.num_windows * tokens * tokens, 0.0);
    for (std::size_t wy = 0; wy < wins_h; ++wy) {
        for (std::size_t wx = 0; wx < wins_w; ++wx) {
            const std::size_t win = wy * wins_w + wx;
            for (std::size_t qi = 0; qi < tokens; ++qi) {
                const std::size_t qy = wy * window + qi / window;
                const std::size_t qx = wx * window + qi % window;
                const std::size_t q_region = region(qy, g.padded_h) * 3 + region(qx, g.padded_w);
                for (std::size_t ki = 0; ki < tokens; ++ki) {
                    const std::size_t ky = wy * window + ki / window;
                    const std::size_t kx = wx * window + ki % window;
                    const std::size_t k_region = region(ky, g.padded_h) * 3 + region(kx, g.padded_w);
                    if (is_pad[win * tokens + ki] || q_region != k_region) {
                        g.mask_d[(win * tokens + qi) * tokens + ki] = kMasked;
                    }
                }
            }
        }
    }
    g.mask_f.assign(g.mask_d.begin(), g.mask_d.end());
    return g;
}

template <>
std::span<const float> WindowGeometry::mask<float>() const
{
    return mask_f;
}

template <>
std::span<const double> WindowGeometry::mask<double>() const
{
    return mask_d;
}

template <class T>
Tensor<T> window_partition(const Tensor<T>& tokens, std::size_t window)
{
    if (tokens.rank() != 3) throw nn::DimensionError("window_partition expects [Hs,Ws,C], got " + nn::shape_str(tokens.shape()));
    const auto g = WindowGeometry::make(tokens.dim(0), tokens.dim(1), tokens.dim(2), window, 0);
    return nn::gather(tokens, g.partition, {g.num_windows, window * window, g.channels});
}

template <class T>
Tensor<T> window_reverse(const Tensor<T>& windows, std::size_t grid_h, std::size_t grid_w, std::size_t window)
{
    const std::size_t channels = windows.shape().back();
    const auto g = WindowGeometry::make(grid_h, grid_w, channels, window, 0);
    if (windows.shape() != nn::Shape{g.num_windows, window * window, channels}) {
        throw nn::DimensionError("window_reverse: windows " + nn::shape_str(windows.shape()) + " do not tile a " +
                                 std::to_string(grid_h) + "x" + std::to_string(grid_w) + " grid");
    }
    return nn::gather(windows, g.reverse, {grid_h, grid_w, channels});
}

template <class T>
Tensor<T> patch_concat(const Tensor<T>& tokens)
{
    if (tokens.rank() != 3) throw nn::DimensionError("patch_merge expects [Hs,Ws,C], got " + nn::shape_str(tokens.shape()));
    const std::size_t h = tokens.dim(0), w = tokens.dim(1), c = tokens.dim(2);
    if (h % 2 || w % 2) throw nn::DimensionError("patch_merge needs an even grid, got " + nn::shape_str(tokens.shape()));
    auto index = std::make_shared<std::vector<std::int64_t>>(h * w * c);
    // Neighbour order (0,0), (1,0), (0,1), (1,1) as (dy,dx).
    constexpr std::size_t dys[4] = {0, 1, 0, 1};
    constexpr std::size_t dxs[4] = {0, 0, 1, 1};
    std::size_t at = 0;
    for (std::size_t y = 0; y < h / 2; ++y) {
        for (std::size_t x = 0; x < w / 2; ++x) {
            for (std::size_t part = 0; part < 4; ++part) {
                const std::size_t src = ((2 * y + dys[part]) * w + (2 * x + dxs[part])) * c;
                for (std::size_t ch = 0; ch < c; ++ch) (*index)[at++] = static_cast<std::int64_t>(src + ch);
            }
        }
    }
    return nn::gather(tokens, GatherIndex(index), {h / 2, w / 2, 4 * c});
}

template <class T>
SwinBlockParams<T> SwinBlockParams<T>::create(ParamStore<T>& store, const std::string& prefix, std::size_t channels,
                                              std::size_t heads, std::size_t window, std::size_t mlp_ratio,
                                              std::mt19937_64& rng)
{
    SwinBlockParams p;
    p.heads = heads;
    const std::size_t t = window * window;
    const std::size_t hidden = channels * mlp_ratio;
    p.norm1_g = store.add_constant(prefix + ".norm1.gamma", {channels}, T(1));
    p.norm1_b = store.add_constant(prefix + ".norm1.beta", {channels}, T(0));
    p.wq = store.add_normal(prefix + ".attn.q.weight", {channels, channels}, rng);
    p.bq = store.add_constant(prefix + ".attn.q.bias", {channels}, T(0));
    p.wk = store.add_normal(prefix + ".attn.k.weight", {channels, channels}, rng);
    p.bk = store.add_constant(prefix + ".attn.k.bias", {channels}, T(0));
    p.wv = store.add_normal(prefix + ".attn.v.weight", {channels, channels}, rng);
    p.bv = store.add_constant(prefix + ".attn.v.bias", {channels}, T(0));
    p.wproj = store.add_normal(prefix + ".attn.proj.weight", {channels, channels}, rng);
    p.bproj = store.add_constant(prefix + ".attn.proj.bias", {channels}, T(0));
    p.pos_bias = store.add_normal(prefix + ".attn.window_bias", {heads, t, t}, rng);
    p.norm2_g = store.add_constant(prefix + ".norm2.gamma", {channels}, T(1));
    p.norm2_b = store.add_constant(prefix + ".norm2.beta", {channels}, T(0));
    p.fc1_w = store.add_normal(prefix + ".mlp.fc1.weight", {channels, hidden}, rng);
    p.fc1_b = store.add_constant(prefix + ".mlp.fc1.bias", {hidden}, T(0));
    p.fc2_w = store.add_normal(prefix + ".mlp.fc2.weight", {hidden, channels}, rng);
    p.fc2_b = store.add_constant(prefix + ".mlp.fc2.bias", {channels}, T(0));
    return p;
}

template <class T>
StageFeatures<T> swin_block(const StageFeatures<T>& tokens, const WindowGeometry& g, const SwinBlockParams<T>& p)
{
    const auto& x = tokens.tensor;
    if (x.shape() != nn::Shape{g.grid_h, g.grid_w, g.channels}) {
        throw nn::DimensionError("swin_block: tokens " + nn::shape_str(x.shape()) + " do not match window geometry");
    }
    constexpr double kLnEps = 1e-5;
    const std::size_t t = g.window * g.window;
    const auto h = nn::layer_norm(x, p.norm1_g, p.norm1_b, kLnEps);
    const auto windows = nn::gather(h, g.partition, {g.num_windows, t, g.channels});
    const auto q = nn::linear(windows, p.wq, p.bq);
    const auto k = nn::linear(windows, p.wk, p.bk);
    const auto v = nn::linear(windows, p.wv, p.bv);
    const auto attn = nn::attention(q, k, v, p.heads, g.template mask<T>(), p.pos_bias);
    const auto projected = nn::linear(attn.output, p.wproj, p.bproj);
    const auto restored = nn::gather(projected, g.reverse, {g.grid_h, g.grid_w, g.channels});
    const auto x1 = nn::add(x, restored);
    const auto mlp = nn::linear(nn::gelu(nn::linear(nn::layer_norm(x1, p.norm2_g, p.norm2_b, kLnEps), p.fc1_w, p.fc1_b)),
                                p.fc2_w, p.fc2_b);
    return {tokens.grid_h, tokens.grid_w, tokens.channels, nn::add(x1, mlp)};
}

template <class T>
StageFeatures<T> patch_embed(const Tensor<T>& image, const EncoderConfig& cfg, const PatchEmbedParams<T>& params)
{
    if (image.rank() != 3 || image.dim(2) != 3) {
        throw nn::DimensionError("patch_embed expects an [H,W,3] image, got " + nn::shape_str(image.shape()));
    }
    const std::size_t h = image.dim(0), w = image.dim(1), p = cfg.patch;
    if (h % p || w % p) {
        throw ConfigError("image " + std::to_string(h) + "x" + std::to_string(w) + " not divisible by patch " +
                          std::to_string(p));
    }
    const std::size_t gh = h / p, gw = w / p, feat = p * p * 3;
    auto index = std::make_shared<std::vector<std::int64_t>>(gh * gw * feat);
    std::size_t at = 0;
    for (std::size_t py = 0; py < gh; ++py) {
        for (std::size_t px = 0; px < gw; ++px) {
            for (std::size_t iy = 0; iy < p; ++iy) {
                for (std::size_t ix = 0; ix < p; ++ix) {
                    for (std::size_t c = 0; c < 3; ++c) {
                        (*index)[at++] = static_cast<std::int64_t>(((py * p + iy) * w + (px * p + ix)) * 3 + c);
                    }
                }
            }
        }
    }
    const auto patches = nn::gather(image, GatherIndex(index), {gh, gw, feat});
    const auto embedded = nn::linear(patches, params.weight, params.bias);
    const std::size_t channels = params.weight.dim(1);
    return {gh, gw, channels, nn::layer_norm(embedded, params.norm_g, params.norm_b, 1e-5)};
}

template <class T>
StageFeatures<T> patch_merge(const StageFeatures<T>& tokens, const PatchMergeParams<T>& params)
{
    const auto merged = patch_concat(tokens.tensor);
    const auto normed = nn::layer_norm(merged, params.norm_g, params.norm_b, 1e-5);
    const auto reduced = nn::linear(normed, params.reduction, Tensor<T>{});
    return {tokens.grid_h / 2, tokens.grid_w / 2, params.reduction.dim(1), reduced};
}

template <class T>
SwinEncoder<T>::SwinEncoder(const EncoderConfig& cfg, ParamStore<T>& store, std::mt19937_64& rng,
                            const std::string& prefix)
    : cfg_(cfg)
{
    cfg_.validate();
    const std::size_t feat = cfg_.patch * cfg_.patch * 3;
    embed_.weight = store.add_normal(prefix + ".patch_embed.weight", {feat, cfg_.dims[0]}, rng);
    embed_.bias = store.add_constant(prefix + ".patch_embed.bias", {cfg_.dims[0]}, T(0));
    embed_.norm_g = store.add_constant(prefix + ".patch_embed.norm.gamma", {cfg_.dims[0]}, T(1));
    embed_.norm_b = store.add_constant(prefix + ".patch_embed.norm.beta", {cfg_.dims[0]}, T(0));
    for (std::size_t s = 0; s < 4; ++s) {
        const std::size_t gh = cfg_.stage_grid_h(s), gw = cfg_.stage_grid_w(s);
        for (std::size_t b = 0; b < cfg_.depths[s]; ++b) {
            // Shifting is pointless when one window already covers the grid.
            const bool shifted = (b % 2 == 1) && (gh > cfg_.window || gw > cfg_.window);
            const std::string name = prefix + ".stage" + std::to_string(s + 1) + ".block" + std::to_string(b);
            blocks_[s].push_back({SwinBlockParams<T>::create(store, name, cfg_.dims[s], cfg_.heads[s], cfg_.window,
                                                             cfg_.mlp_ratio, rng),
                                  WindowGeometry::make(gh, gw, cfg_.dims[s], cfg_.window, shifted ? cfg_.window / 2 : 0)});
        }
        if (s < 3) {
            const std::string name = prefix + ".stage" + std::to_string(s + 1) + ".merge";
            merges_[s].norm_g = store.add_constant(name + ".norm.gamma", {4 * cfg_.dims[s]}, T(1));
            merges_[s].norm_b = store.add_constant(name + ".norm.beta", {4 * cfg_.dims[s]}, T(0));
            merges_[s].reduction = store.add_normal(name + ".reduction", {4 * cfg_.dims[s], 2 * cfg_.dims[s]}, rng);
        }
    }
    final_norm_g_ = store.add_constant(prefix + ".norm.gamma", {cfg_.dims[3]}, T(1));
    final_norm_b_ = store.add_constant(prefix + ".norm.beta", {cfg_.dims[3]}, T(0));
}

template <class T>
std::vector<StageFeatures<T>> SwinEncoder<T>::encode_stages(const Tensor<T>& image) const
{
    if (image.rank() != 3 || image.dim(0) != cfg_.input_h || image.dim(1) != cfg_.input_w) {
        throw nn::DimensionError("encoder expects a " + std::to_string(cfg_.input_h) + "x" +
                                 std::to_string(cfg_.input_w) + "x3 image, got " + nn::shape_str(image.shape()));
    }
    std::vector<StageFeatures<T>> outputs;
    auto features = patch_embed(image, cfg_, embed_);
    for (std::size_t s = 0; s < 4; ++s) {
        if (s > 0) features = patch_merge(features, merges_[s - 1]);
        for (const auto& block : blocks_[s]) features = swin_block(features, block.geometry, block.params);
        outputs.push_back(features);
    }
    auto& last = outputs.back();
    last.tensor = nn::layer_norm(last.tensor, final_norm_g_, final_norm_b_, 1e-5);
    return outputs;
}

template <class T>
StageFeatures<T> SwinEncoder<T>::encode(const Tensor<T>& image) const
{
    return encode_stages(image).back();
}

#define TREX_INSTANTIATE_ENCODER(T)                                                                               \
    template Tensor<T> window_partition(const Tensor<T>&, std::size_t);                                           \
    template Tensor<T> window_reverse(const Tensor<T>&, std::size_t, std::size_t, std::size_t);                   \
    template Tensor<T> patch_concat(const Tensor<T>&);                                                            \
    template struct SwinBlockParams<T>;                                                                           \
    template StageFeatures<T> swin_block(const StageFeatures<T>&, const WindowGeometry&, const SwinBlockParams<T>&); \
    template StageFeatures<T> patch_embed(const Tensor<T>&, const EncoderConfig&, const PatchEmbedParams<T>&);    \
    template StageFeatures<T> patch_merge(const StageFeatures<T>&, const PatchMergeParams<T>&);                   \
    template class SwinEncoder<T>;

TREX_INSTANTIATE_ENCODER(float)
TREX_INSTANTIATE_ENCODER(double)

}  // namespace trex::model
