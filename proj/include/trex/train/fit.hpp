#pragma once

#include "trex/data/manifest.hpp"
#include "trex/data/sampling.hpp"
#include "trex/model/model.hpp"
#include "trex/train/optim.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace trex::train {

struct TrainConfig {
    double lr = 2e-4;
    std::size_t warmup_epochs = 10;
    std::size_t epochs = 30;
    std::size_t batch = 8;
    std::uint64_t seed = 0;
    std::size_t k_folds = 5;
    data::Task task = data::Task::Surveillance;
    model::ModelConfig model;  // kind and the no_dca / no_dt ablations live here
    bool no_balance = false;
    bool no_augment = false;

    double grad_clip = 5.0;             // 0 disables
    bool constant_after_warmup = false;
    std::size_t batches_per_epoch = 0;  // 0: one pass over the training pairs
    std::size_t val_log_pairs = 64;     // validation pairs scored per log line; 0: all
    std::size_t threads = 1;            // folds trained concurrently

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

/// Linear warmup to `lr` over the first warmup epochs, then linear decay
/// reaching 0 at `epochs` (or constant with `constant_after_warmup`).
double lr_at(std::size_t epoch, const TrainConfig& cfg);

struct EpochLog {
    std::size_t fold = 0;
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_bal_acc = 0.0;  // NaN when the validation subset lacks a class
};

struct FoldModel {
    std::size_t fold = 0;
    std::size_t epoch = 0;  // last trained epoch
    std::unique_ptr<model::PairModel<float>> model;
};

struct FitResult {
    data::FoldAssignment folds;
    std::vector<FoldModel> models;
    std::vector<EpochLog> log;
};

class TrainingAborted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using FitProgress = std::function<void(const EpochLog&)>;

/// Trains one model for `fold` on the training side of the split.
FoldModel fit_fold(const std::vector<data::ImagePair>& train_pairs, const std::vector<data::ImagePair>& val_pairs,
                   const data::ImageStore& images, const TrainConfig& cfg, std::size_t fold,
                   std::vector<EpochLog>* log = nullptr, const FitProgress& progress = {});

/// Stratified k-fold cross-validation; returns the last-epoch model of every fold.
FitResult fit(const data::Cohort& cohort, const data::ImageStore& images, const TrainConfig& cfg,
              const FitProgress& progress = {});

/// Model initialisation seed for `fold`.
std::uint64_t fold_init_seed(const TrainConfig& cfg, std::size_t fold);

void write_training_log(const std::vector<EpochLog>& log, std::ostream& out);

}  // namespace trex::train
