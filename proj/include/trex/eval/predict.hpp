#pragma once

#include "trex/data/manifest.hpp"
#include "trex/model/model.hpp"

#include <vector>

namespace trex::eval {

/// Softmax LR probability of [CR, LR] logits.
double lr_probability(double z_cr, double z_lr);

/// Inference-mode LR probability per pair. Each distinct image is encoded once.
template <class T>
std::vector<double> predict_pairs(const model::PairModel<T>& model, const std::vector<data::ImagePair>& pairs,
                                  const data::ImageStore& images);

}  // namespace trex::eval
