#pragma once

#include "trex/model/params.hpp"
#include "trex/nn/ops.hpp"

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace trex::model {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct EncoderConfig {
    std::size_t input_h = 64;
    std::size_t input_w = 64;
    std::size_t patch = 4;
    std::size_t window = 4;
    std::array<std::size_t, 4> depths{1, 1, 2, 1};
    std::array<std::size_t, 4> dims{16, 32, 64, 128};
    std::array<std::size_t, 4> heads{1, 2, 4, 8};
    std::size_t mlp_ratio = 4;

    /// "toy" (64 px desk config), "tiny" / "small" (Swin-T / Swin-S widths at
    /// 64 px), "swin-tiny" / "swin-small" (full 224 px geometry).
    static EncoderConfig named(std::string_view name);

    void validate() const;
    std::size_t stage4_channels() const { return dims[3]; }
    std::size_t stage_grid_h(std::size_t stage) const { return input_h / patch >> stage; }
    std::size_t stage_grid_w(std::size_t stage) const { return input_w / patch >> stage; }

    bool operator==(const EncoderConfig&) const = default;
};

template <class T>
struct StageFeatures {
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;
    std::size_t channels = 0;
    Tensor<T> tensor;  // [grid_h, grid_w, channels]
};

/// Gather tables and the additive mask for one (grid, window, shift) layout.
struct WindowGeometry {
    std::size_t grid_h = 0, grid_w = 0, window = 0, shift = 0;
    std::size_t padded_h = 0, padded_w = 0, num_windows = 0;
    std::size_t channels = 0;
    nn::GatherIndex partition;  // [Hs,Ws,C] -> [nw, window^2, C]
    nn::GatherIndex reverse;    // [nw, window^2, C] -> [Hs,Ws,C]
    std::vector<float> mask_f;  // [nw, T, T]; empty when all-pass
    std::vector<double> mask_d;

    static WindowGeometry make(std::size_t grid_h, std::size_t grid_w, std::size_t channels, std::size_t window,
                               std::size_t shift);

    template <class T>
    std::span<const T> mask() const;
};

template <>
std::span<const float> WindowGeometry::mask<float>() const;
template <>
std::span<const double> WindowGeometry::mask<double>() const;

/// Splits [Hs,Ws,C] into [nw, window^2, C] non-overlapping windows (zero-padded
/// bottom/right when the grid does not divide).
template <class T>
Tensor<T> window_partition(const Tensor<T>& tokens, std::size_t window);
template <class T>
Tensor<T> window_reverse(const Tensor<T>& windows, std::size_t grid_h, std::size_t grid_w, std::size_t window);

/// [Hs,Ws,C] -> [Hs/2,Ws/2,4C] neighborhood concatenation (before reduction).
template <class T>
Tensor<T> patch_concat(const Tensor<T>& tokens);

template <class T>
struct SwinBlockParams {
    Tensor<T> norm1_g, norm1_b, wq, bq, wk, bk, wv, bv, wproj, bproj, pos_bias;
    Tensor<T> norm2_g, norm2_b, fc1_w, fc1_b, fc2_w, fc2_b;
    std::size_t heads = 1;

    static SwinBlockParams create(ParamStore<T>& store, const std::string& prefix, std::size_t channels,
                                  std::size_t heads, std::size_t window, std::size_t mlp_ratio, std::mt19937_64& rng);
};

/// One (shifted) windowed self-attention block; shape preserving.
template <class T>
StageFeatures<T> swin_block(const StageFeatures<T>& tokens, const WindowGeometry& geometry,
                            const SwinBlockParams<T>& params);

template <class T>
struct PatchEmbedParams {
    Tensor<T> weight, bias, norm_g, norm_b;
};

template <class T>
struct PatchMergeParams {
    Tensor<T> norm_g, norm_b, reduction;
};

template <class T>
StageFeatures<T> patch_embed(const Tensor<T>& image, const EncoderConfig& cfg, const PatchEmbedParams<T>& params);

template <class T>
StageFeatures<T> patch_merge(const StageFeatures<T>& tokens, const PatchMergeParams<T>& params);

/// Four-stage hierarchical windowed-attention encoder producing Stage-4 features.
template <class T>
class SwinEncoder {
public:
    SwinEncoder(const EncoderConfig& cfg, ParamStore<T>& store, std::mt19937_64& rng,
                const std::string& prefix = "encoder");

    /// image: [H,W,3] normalized pixels.
    StageFeatures<T> encode(const Tensor<T>& image) const;
    /// Outputs of all four stages, Stage 1 first.
    std::vector<StageFeatures<T>> encode_stages(const Tensor<T>& image) const;

    const EncoderConfig& config() const { return cfg_; }

private:
    struct Block {
        SwinBlockParams<T> params;
        WindowGeometry geometry;
    };
    EncoderConfig cfg_;
    PatchEmbedParams<T> embed_;
    std::array<std::vector<Block>, 4> blocks_;
    std::array<PatchMergeParams<T>, 3> merges_;
    Tensor<T> final_norm_g_, final_norm_b_;
};

}  // namespace trex::model
