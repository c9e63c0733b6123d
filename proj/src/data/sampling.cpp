#include "trex/data/sampling.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace trex::data {

std::vector<std::string> FoldAssignment::patients_in(std::size_t fold) const
{
    std::vector<std::string> out;
    for (const auto& [id, f] : fold_of) {
        if (f == fold) out.push_back(id);
    }
    return out;
}

FoldAssignment split_folds(const Cohort& cohort, std::size_t k, std::uint64_t seed)
{
    if (k < 2) throw std::invalid_argument("need at least 2 folds");
    std::vector<std::string> by_class[2];
    for (const auto& p : cohort.patients) by_class[static_cast<int>(p.outcome)].push_back(p.patient_id);
    for (int c = 0; c < 2; ++c) {
        if (by_class[c].size() < k) {
            throw std::invalid_argument("stratified split needs at least " + std::to_string(k) + " " +
                                        std::string(to_string(static_cast<Outcome>(c))) + " patients, have " +
                                        std::to_string(by_class[c].size()));
        }
    }
    std::mt19937_64 rng(seed);
    FoldAssignment folds;
    folds.k = k;
    std::size_t cursor = 0;
    for (auto& ids : by_class) {
        std::shuffle(ids.begin(), ids.end(), rng);
        for (const auto& id : ids) folds.fold_of[id] = cursor++ % k;
    }
    return folds;
}

FoldPairs partition_pairs(const std::vector<ImagePair>& pairs, const FoldAssignment& folds, std::size_t fold)
{
    FoldPairs out;
    for (const auto& p : pairs) {
        (folds.in_validation(p.patient_id, fold) ? out.validation : out.train).push_back(p);
    }
    return out;
}

BatchStream::BatchStream(const std::vector<ImagePair>& pairs, std::size_t batch, bool balanced, std::uint64_t seed,
                         std::size_t batches_per_epoch)
    : batch_(batch), balanced_(balanced), total_(pairs.size()), rng_(seed)
{
    if (batch == 0) throw std::invalid_argument("batch size must be positive");
    if (pairs.empty()) throw std::invalid_argument("no training pairs");
    for (std::size_t i = 0; i < pairs.size(); ++i) pools_[static_cast<int>(pairs[i].label)].push_back(i);
    if (balanced_ && (pools_[0].empty() || pools_[1].empty())) {
        throw std::invalid_argument("balanced sampling needs both classes; only " +
                                    std::string(to_string(pools_[0].empty() ? Outcome::LR : Outcome::CR)) + " present");
    }
    batches_per_epoch_ = batches_per_epoch ? batches_per_epoch : (total_ + batch - 1) / batch;
    if (!balanced_) {
        pools_[0].resize(total_);
        std::iota(pools_[0].begin(), pools_[0].end(), std::size_t{0});
        pools_[1].clear();
    }
    for (auto& pool : pools_) std::shuffle(pool.begin(), pool.end(), rng_);
}

std::size_t BatchStream::draw(int cls)
{
    auto& pool = pools_[cls];
    if (cursor_[cls] == pool.size()) {
        std::shuffle(pool.begin(), pool.end(), rng_);
        cursor_[cls] = 0;
    }
    return pool[cursor_[cls]++];
}

std::vector<std::vector<std::size_t>> BatchStream::next_epoch()
{
    std::vector<std::vector<std::size_t>> epoch;
    epoch.reserve(batches_per_epoch_);
    for (std::size_t b = 0; b < batches_per_epoch_; ++b) {
        std::vector<std::size_t> indices;
        if (balanced_) {
            const int major = static_cast<int>(batch_counter_++ % 2);
            const std::size_t n_major = (batch_ + 1) / 2;
            for (std::size_t i = 0; i < batch_; ++i) indices.push_back(draw(i < n_major ? major : 1 - major));
            std::shuffle(indices.begin(), indices.end(), rng_);
        } else {
            for (std::size_t i = 0; i < batch_; ++i) indices.push_back(draw(0));
        }
        epoch.push_back(std::move(indices));
    }
    return epoch;
}

std::vector<std::vector<std::size_t>> balanced_batches(const std::vector<ImagePair>& pairs, std::size_t batch,
                                                       std::uint64_t seed)
{
    return BatchStream(pairs, batch, true, seed).next_epoch();
}

}  // namespace trex::data
