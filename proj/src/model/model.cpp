#include "trex/model/model.hpp"

#include <cmath>

namespace trex::model {

std::string_view to_string(ModelKind kind)
{
    switch (kind) {
    case ModelKind::Trex: return "trex";
    case ModelKind::Cat: return "cat";
    case ModelKind::Si: return "si";
    }
    return "?";
}

ModelKind parse_model_kind(std::string_view text)
{
    if (text == "trex") return ModelKind::Trex;
    if (text == "cat") return ModelKind::Cat;
    if (text == "si") return ModelKind::Si;
    throw ConfigError("unknown model kind '" + std::string(text) + "' (expected trex, cat or si)");
}

std::size_t ModelConfig::head_input_width() const
{
    const std::size_t c = encoder.stage4_channels();
    switch (kind) {
    case ModelKind::Trex: return 3 * c + 1;
    case ModelKind::Cat: return 2 * c;
    case ModelKind::Si: return c;
    }
    return c;
}

void ModelConfig::validate() const
{
    encoder.validate();
    if (kind == ModelKind::Trex && (dca_heads == 0 || encoder.stage4_channels() % dca_heads)) {
        throw ConfigError("Stage-4 width " + std::to_string(encoder.stage4_channels()) +
                          " not divisible by DCA heads " + std::to_string(dca_heads));
    }
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0,1)");
    if (head_hidden == 0) throw ConfigError("head hidden width must be positive");
}

template <class T>
PairModel<T>::PairModel(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg)
{
    cfg_.validate();
    std::mt19937_64 rng(init_seed);
    encoder_.emplace(cfg_.encoder, params_, rng);
    const std::size_t c = cfg_.encoder.stage4_channels();
    if (cfg_.kind == ModelKind::Trex && !cfg_.no_dca) {
        if (cfg_.share_projections) {
            res_queries_ = AttentionParams<T>::create(params_, "dca.shared", c, cfg_.dca_heads, rng);
            fup_queries_ = res_queries_;
        } else {
            res_queries_ = AttentionParams<T>::create(params_, "dca.res2fup", c, cfg_.dca_heads, rng);
            fup_queries_ = AttentionParams<T>::create(params_, "dca.fup2res", c, cfg_.dca_heads, rng);
        }
        if (cfg_.share_layer_norm) {
            ln_res_ = LayerNormParams<T>::create(params_, "dca.norm", c);
            ln_fup_ = ln_res_;
        } else {
            ln_res_ = LayerNormParams<T>::create(params_, "dca.norm_res", c);
            ln_fup_ = LayerNormParams<T>::create(params_, "dca.norm_fup", c);
        }
    }
    head_ = FusionHead<T>::create(params_, "head", cfg_.head_input_width(), cfg_.head_hidden, cfg_.dropout, rng);
}

template <class T>
ForwardResult<T> PairModel<T>::classify_features(const StageFeatures<T>& f_res, const StageFeatures<T>& f_fup,
                                                 double dt_norm, std::mt19937_64* dropout_rng) const
{
    ForwardResult<T> out;
    out.f_res = f_res;
    out.f_fup = f_fup;
    switch (cfg_.kind) {
    case ModelKind::Trex: {
        if (!(dt_norm >= 0.0 && dt_norm <= 1.0)) {
            throw ContractError("normalized time gap must lie in [0,1], got " + std::to_string(dt_norm));
        }
        const double dt = cfg_.no_dt ? 0.0 : dt_norm;
        if (cfg_.no_dca) {
            out.logits = trex_classify(f_res, f_fup, f_fup, dt, head_, dropout_rng);
        } else {
            out.dca = dual_cross_attention(f_res, f_fup, res_queries_, fup_queries_, ln_res_, ln_fup_);
            out.logits = trex_classify(*out.dca, f_fup, dt, head_, dropout_rng);
        }
        break;
    }
    case ModelKind::Cat: out.logits = cat_classify(f_res, f_fup, head_, dropout_rng); break;
    case ModelKind::Si: out.logits = si_classify(f_fup, head_, dropout_rng); break;
    }
    return out;
}

template <class T>
ForwardResult<T> PairModel<T>::forward(const Tensor<T>& ref_image, const Tensor<T>& later_image, double dt_norm,
                                       std::mt19937_64* dropout_rng) const
{
    if (cfg_.kind == ModelKind::Si) {
        // The single-image model routes its one view through the f_fup slot.
        const auto& view = cfg_.si_view == SiView::Later ? later_image : ref_image;
        const auto f = encoder_->encode(view);
        return classify_features(f, f, dt_norm, dropout_rng);
    }
    return classify_features(encoder_->encode(ref_image), encoder_->encode(later_image), dt_norm, dropout_rng);
}

template <class T>
double PairModel<T>::predict_lr(const Tensor<T>& ref_image, const Tensor<T>& later_image, double dt_norm) const
{
    nn::NoGradGuard guard;
    const auto logits = forward(ref_image, later_image, dt_norm).logits;
    const double z0 = logits.at(0), z1 = logits.at(1);
    const double m = std::max(z0, z1);
    const double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
    return e1 / (e0 + e1);
}

template class PairModel<float>;
template class PairModel<double>;

}  // namespace trex::model
