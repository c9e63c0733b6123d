#pragma once

#include "trex/model/dca.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace trex::model {

enum class ModelKind { Trex, Cat, Si };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

/// Which image of a pair the single-image baseline sees.
enum class SiView { Later, Reference };

struct ModelConfig {
    ModelKind kind = ModelKind::Trex;
    EncoderConfig encoder;
    std::size_t dca_heads = 8;
    bool share_projections = false;
    bool share_layer_norm = false;
    std::size_t head_hidden = 64;
    double dropout = 0.1;
    bool no_dca = false;
    bool no_dt = false;
    SiView si_view = SiView::Later;

    std::size_t head_input_width() const;
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

template <class T>
struct ForwardResult {
    Tensor<T> logits;  // [2]: CR, LR
    StageFeatures<T> f_res, f_fup;
    std::optional<DcaOutput<T>> dca;
};

/// Siamese pair classifier: one encoder shared by both images.
template <class T>
class PairModel {
public:
    PairModel(const ModelConfig& cfg, std::uint64_t init_seed);

    PairModel(const PairModel&) = delete;
    PairModel& operator=(const PairModel&) = delete;

    /// `dropout_rng` null selects inference behaviour.
    ForwardResult<T> forward(const Tensor<T>& ref_image, const Tensor<T>& later_image, double dt_norm,
                             std::mt19937_64* dropout_rng = nullptr) const;

    /// Classifies precomputed Stage-4 features (used by Grad-CAM).
    ForwardResult<T> classify_features(const StageFeatures<T>& f_res, const StageFeatures<T>& f_fup, double dt_norm,
                                       std::mt19937_64* dropout_rng = nullptr) const;

    /// Softmax LR probability in inference mode.
    double predict_lr(const Tensor<T>& ref_image, const Tensor<T>& later_image, double dt_norm) const;

    const ModelConfig& config() const { return cfg_; }
    ParamStore<T>& params() { return params_; }
    const ParamStore<T>& params() const { return params_; }
    const SwinEncoder<T>& encoder() const { return *encoder_; }

private:
    ModelConfig cfg_;
    ParamStore<T> params_;
    std::optional<SwinEncoder<T>> encoder_;
    AttentionParams<T> res_queries_, fup_queries_;
    LayerNormParams<T> ln_res_, ln_fup_;
    FusionHead<T> head_;
};

extern template class PairModel<float>;
extern template class PairModel<double>;

}  // namespace trex::model
