#include "trex/eval/predict.hpp"

#include <cmath>
#include <map>

namespace trex::eval {

double lr_probability(double z_cr, double z_lr)
{
    const double m = std::max(z_cr, z_lr);
    const double e0 = std::exp(z_cr - m), e1 = std::exp(z_lr - m);
    return e1 / (e0 + e1);
}

template <class T>
std::vector<double> predict_pairs(const model::PairModel<T>& model, const std::vector<data::ImagePair>& pairs,
                                  const data::ImageStore& images)
{
    nn::NoGradGuard guard;
    std::map<std::string, model::StageFeatures<T>> cache;
    auto features = [&](const std::string& path) -> const model::StageFeatures<T>& {
        auto it = cache.find(path);
        if (it == cache.end()) {
            it = cache.emplace(path, model.encoder().encode(data::to_tensor<T>(images.get(path)))).first;
        }
        return it->second;
    };
    const auto& cfg = model.config();
    std::vector<double> out;
    out.reserve(pairs.size());
    for (const auto& pair : pairs) {
        model::ForwardResult<T> r;
        if (cfg.kind == model::ModelKind::Si) {
            const auto& f = features(cfg.si_view == model::SiView::Later ? pair.later_image : pair.ref_image);
            r = model.classify_features(f, f, pair.dt_norm);
        } else {
            r = model.classify_features(features(pair.ref_image), features(pair.later_image), pair.dt_norm);
        }
        out.push_back(lr_probability(r.logits.at(0), r.logits.at(1)));
    }
    return out;
}

template std::vector<double> predict_pairs<float>(const model::PairModel<float>&, const std::vector<data::ImagePair>&,
                                                  const data::ImageStore&);
template std::vector<double> predict_pairs<double>(const model::PairModel<double>&, const std::vector<data::ImagePair>&,
                                                   const data::ImageStore&);

}  // namespace trex::eval
