#pragma once

#include "trex/data/cohort.hpp"

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace trex::data {

/// patient_id -> fold index in [0, k).
struct FoldAssignment {
    std::size_t k = 0;
    std::map<std::string, std::size_t> fold_of;

    std::vector<std::string> patients_in(std::size_t fold) const;
    bool in_validation(const std::string& patient_id, std::size_t fold) const { return fold_of.at(patient_id) == fold; }
};

/// Stratified patient-level split: each class is shuffled with `seed` and
/// dealt round-robin, continuing the fold cursor across classes.
FoldAssignment split_folds(const Cohort& cohort, std::size_t k, std::uint64_t seed);

/// Training and validation pairs of one fold.
struct FoldPairs {
    std::vector<ImagePair> train;
    std::vector<ImagePair> validation;
};
FoldPairs partition_pairs(const std::vector<ImagePair>& pairs, const FoldAssignment& folds, std::size_t fold);

/// Yields batches of pair indices for one epoch at a time.
class BatchStream {
public:
    /// `balanced`: every batch holds ceil(b/2) / floor(b/2) of the two classes
    /// (the larger share alternating between batches); classes are drawn from
    /// per-class shuffled cycles, so the minority repeats within an epoch.
    /// Otherwise: a plain shuffled pass. `batches_per_epoch` 0 means
    /// ceil(pairs / batch).
    BatchStream(const std::vector<ImagePair>& pairs, std::size_t batch, bool balanced, std::uint64_t seed,
                std::size_t batches_per_epoch = 0);

    std::vector<std::vector<std::size_t>> next_epoch();
    std::size_t batches_per_epoch() const { return batches_per_epoch_; }

private:
    std::size_t draw(int cls);

    std::size_t batch_;
    bool balanced_;
    std::size_t batches_per_epoch_;
    std::size_t total_;
    std::mt19937_64 rng_;
    std::vector<std::size_t> pools_[2];
    std::size_t cursor_[2] = {0, 0};
    std::size_t batch_counter_ = 0;
};

/// Convenience wrapper: one epoch of balanced batches of size `batch`.
std::vector<std::vector<std::size_t>> balanced_batches(const std::vector<ImagePair>& pairs, std::size_t batch,
                                                       std::uint64_t seed);

}  // namespace trex::data
