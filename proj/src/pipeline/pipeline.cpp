#include "trex/pipeline.hpp"

#include "trex/eval/predict.hpp"

#include <fstream>
#include <sstream>

namespace trex::pipeline {

Experiment load_experiment(const fs::path& data_dir, const model::EncoderConfig& encoder)
{
    Experiment exp;
    exp.cohort = data::assign_retrospective_labels(data::load_manifest(data_dir / "manifest.csv"));
    exp.images = data::ImageStore::load(exp.cohort, data_dir, encoder.input_w, encoder.input_h);
    return exp;
}

Experiment load_experiment(const io::RunConfig& cfg)
{
    return load_experiment(cfg.data_dir, cfg.train.model.encoder);
}

data::SynthCohort run_synth(const io::RunConfig& cfg, const fs::path& out)
{
    auto synth = data::synth_cohort(cfg.synth, cfg.seed);
    data::write_synth_cohort(synth, out);
    io::write_config(cfg, out / "config.resolved");
    return synth;
}

std::vector<eval::PredictionRecord> predict_folds(const train::FitResult& fit, const Experiment& exp, const io::RunConfig& cfg)
{
    const auto pairs = data::build_pairs(exp.cohort, cfg.train.task);
    std::vector<eval::PredictionRecord> records;
    for (const auto& fm : fit.models) {
        auto validation = data::partition_pairs(pairs, fit.folds, fm.fold).validation;
        // the single-image model sees each follow-up image once
        if (fm.model->config().kind == model::ModelKind::Si) validation = data::unique_later_images(validation);
        const auto probs = eval::predict_pairs(*fm.model, validation, exp.images);
        auto fold_records = eval::make_records(validation, probs, fm.fold, cfg.eval.k, cfg.eval.aggregation);
        records.insert(records.end(), fold_records.begin(), fold_records.end());
    }
    return records;
}

void write_folds(const data::FoldAssignment& folds, const fs::path& path)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "patient_id,fold\n";
    for (const auto& [id, f] : folds.fold_of) out << id << ',' << f << '\n';
}

data::FoldAssignment read_folds(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "patient_id,fold") throw std::runtime_error(path.string() + ": bad header");
    data::FoldAssignment folds;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw std::runtime_error(path.string() + ": malformed line '" + line + "'");
        const auto fold = static_cast<std::size_t>(std::stoul(line.substr(comma + 1)));
        folds.fold_of[line.substr(0, comma)] = fold;
        folds.k = std::max(folds.k, fold + 1);
    }
    return folds;
}

void save_fit(const train::FitResult& fit, const io::RunConfig& cfg, const fs::path& out)
{
    fs::create_directories(out / "checkpoints");
    for (const auto& fm : fit.models) {
        io::CheckpointMeta meta{cfg.seed, fm.epoch, static_cast<std::uint32_t>(fm.fold)};
        io::save_checkpoint(*fm.model, meta, out / "checkpoints" / ("fold_" + std::to_string(fm.fold) + ".ckpt"));
    }
    write_folds(fit.folds, out / "folds.csv");
    std::ofstream log(out / "train_log.csv");
    train::write_training_log(fit.log, log);
    if (!log) throw std::runtime_error("cannot write " + (out / "train_log.csv").string());
    io::write_config(cfg, out / "config.resolved");
}

train::FitResult load_fit(const fs::path& run_dir, const io::RunConfig& cfg)
{
    train::FitResult fit;
    fit.folds = read_folds(run_dir / "folds.csv");
    if (fit.folds.k != cfg.train.k_folds) {
        throw std::runtime_error("run has " + std::to_string(fit.folds.k) + " folds, config asks for " + std::to_string(cfg.train.k_folds));
    }
    for (std::size_t f = 0; f < fit.folds.k; ++f) {
        auto loaded = io::load_checkpoint(run_dir / "checkpoints" / ("fold_" + std::to_string(f) + ".ckpt"), cfg.train.model);
        fit.models.push_back({f, loaded.meta.epoch, std::move(loaded.model)});
    }
    return fit;
}

eval::BinReport save_eval(const std::vector<eval::PredictionRecord>& records, const io::RunConfig& cfg, const fs::path& out)
{
    fs::create_directories(out);
    eval::write_predictions(records, out / "predictions.csv");
    const auto report = eval::bin_report(records, cfg.train.k_folds);
    eval::write_report_csv(report, out / "report.csv");
    return report;
}

}  // namespace trex::pipeline
