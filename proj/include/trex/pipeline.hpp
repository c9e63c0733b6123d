#pragma once

#include "trex/data/synth.hpp"
#include "trex/eval/report.hpp"
#include "trex/io/checkpoint.hpp"
#include "trex/io/config.hpp"
#include "trex/train/fit.hpp"

#include <filesystem>
#include <vector>

namespace trex::pipeline {

namespace fs = std::filesystem;

struct Experiment {
    data::Cohort cohort;
    data::ImageStore images;
};

/// Reads `<data_dir>/manifest.csv` and loads every image at the encoder resolution.
Experiment load_experiment(const io::RunConfig& cfg);
Experiment load_experiment(const fs::path& data_dir, const model::EncoderConfig& encoder);

/// Synthesises the configured cohort, writes it under `out` and returns it.
data::SynthCohort run_synth(const io::RunConfig& cfg, const fs::path& out);

/// Validation-side predictions of every fold model, ordered by fold.
std::vector<eval::PredictionRecord> predict_folds(const train::FitResult& fit, const Experiment& exp, const io::RunConfig& cfg);

/// Writes checkpoints/fold_<k>.ckpt, folds.csv, train_log.csv and config.resolved.
void save_fit(const train::FitResult& fit, const io::RunConfig& cfg, const fs::path& out);
/// Reads what save_fit wrote; checkpoints must match the run's model config.
train::FitResult load_fit(const fs::path& run_dir, const io::RunConfig& cfg);

void write_folds(const data::FoldAssignment& folds, const fs::path& path);
data::FoldAssignment read_folds(const fs::path& path);

/// Writes predictions.csv and report.csv; returns the report.
eval::BinReport save_eval(const std::vector<eval::PredictionRecord>& records, const io::RunConfig& cfg, const fs::path& out);

}  // namespace trex::pipeline
