#include "trex/data/manifest.hpp"
#include "trex/eval/predict.hpp"
#include "trex/interpret/heatmap.hpp"
#include "trex/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace trex;

namespace {

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string data;
    std::string model;
    std::string task;
    std::optional<std::size_t> k;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& o)
{
    cmd->add_option("--config", o.config_path, "key=value configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "master seed");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--data", o.data, "cohort directory holding manifest.csv");
    cmd->add_option("--model", o.model, "trex, cat or si");
    cmd->add_option("--task", o.task, "surveillance or response");
    cmd->add_option("--k", o.k, "top-K images per study");
    cmd->add_option("--set", o.overrides, "extra key=value overrides")->allow_extra_args(false);
}

io::RunConfig resolve(const CommonOptions& o)
{
    io::RunConfig cfg = o.config_path.empty() ? io::RunConfig{} : io::load_config(o.config_path);
    for (const auto& kv : o.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw io::ConfigError("--set expects key=value, got '" + kv + "'");
        io::set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (o.seed) io::set_config_value(cfg, "seed", std::to_string(*o.seed));
    if (!o.out.empty()) cfg.out_dir = o.out;
    if (!o.data.empty()) cfg.data_dir = o.data;
    if (!o.model.empty()) io::set_config_value(cfg, "model.kind", o.model);
    if (!o.task.empty()) io::set_config_value(cfg, "task", o.task);
    if (o.k) cfg.eval.k = *o.k;
    if (const char* threads = std::getenv("TREX_THREADS")) io::set_config_value(cfg, "train.threads", threads);
    cfg.validate();
    return cfg;
}

void log_progress(const train::EpochLog& e)
{
    std::cerr << "fold " << e.fold << " epoch " << e.epoch << " lr " << e.lr << " loss " << e.train_loss
              << " val_bal_acc " << eval::format_optional(std::isnan(e.val_bal_acc) ? std::nullopt : std::optional(e.val_bal_acc))
              << '\n';
}

int cmd_synth(const CommonOptions& o)
{
    auto cfg = resolve(o);
    const fs::path out = o.out.empty() ? fs::path(cfg.data_dir) : fs::path(o.out);
    const auto synth = pipeline::run_synth(cfg, out);
    std::cout << "wrote " << synth.cohort.patients.size() << " patients (" << synth.cohort.count(data::Outcome::LR)
              << " LR) to " << out.string() << '\n';
    return 0;
}

int cmd_train(const CommonOptions& o)
{
    auto cfg = resolve(o);
    const auto exp = pipeline::load_experiment(cfg);
    const auto fit = train::fit(exp.cohort, exp.images, cfg.train, log_progress);
    pipeline::save_fit(fit, cfg, cfg.out_dir);
    std::cout << "trained " << fit.models.size() << " folds; run written to " << cfg.out_dir << '\n';
    return 0;
}

int cmd_eval(const CommonOptions& o, const std::string& run_dir, const std::string& aggregation)
{
    auto cfg = resolve(o);
    if (!aggregation.empty()) cfg.eval.aggregation = eval::parse_aggregation(aggregation);
    const fs::path run = run_dir.empty() ? fs::path(cfg.out_dir) : fs::path(run_dir);
    const auto exp = pipeline::load_experiment(cfg);
    const auto fit = pipeline::load_fit(run, cfg);
    const auto records = pipeline::predict_folds(fit, exp, cfg);
    const auto report = pipeline::save_eval(records, cfg, cfg.out_dir);
    io::write_config(cfg, fs::path(cfg.out_dir) / "config.resolved");
    eval::print_report_table(report, std::cout);
    return 0;
}

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
}

int cmd_predict(const CommonOptions& o, const std::string& checkpoint, const std::string& pairs_path)
{
    auto cfg = resolve(o);
    auto loaded = io::load_checkpoint(checkpoint);
    const auto& enc = loaded.config.encoder;

    std::ifstream in(pairs_path);
    if (!in) throw std::runtime_error("cannot open " + pairs_path);
    std::string line;
    if (!std::getline(in, line) || line != "ref_image,later_image,delta_days") {
        throw std::runtime_error(pairs_path + ": header must be ref_image,later_image,delta_days");
    }
    std::vector<data::ImagePair> pairs;
    data::ImageStore images;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != 3) throw std::runtime_error(pairs_path + ":" + std::to_string(line_no) + ": expected 3 fields");
        data::ImagePair p;
        p.ref_image = cells[0];
        p.later_image = cells[1];
        p.dt_norm = data::normalize_dt(std::stoi(cells[2]));
        for (const auto& path : {p.ref_image, p.later_image}) {
            if (images.contains(path)) continue;
            const fs::path full = fs::path(path).is_absolute() ? fs::path(path) : fs::path(cfg.data_dir) / path;
            images.put(path, data::resize_bilinear(data::read_image(full), enc.input_w, enc.input_h));
        }
        pairs.push_back(std::move(p));
    }
    const auto probs = eval::predict_pairs(*loaded.model, pairs, images);

    fs::create_directories(cfg.out_dir);
    const fs::path out_path = fs::path(cfg.out_dir) / "pair_predictions.csv";
    std::ofstream out(out_path);
    out << "ref_image,later_image,prob_lr,predicted\n";
    char buf[32];
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.9g", probs[i]);
        out << pairs[i].ref_image << ',' << pairs[i].later_image << ',' << buf << ','
            << (probs[i] >= 0.5 ? "LR" : "CR") << '\n';
    }
    if (!out) throw std::runtime_error("cannot write " + out_path.string());
    io::write_config(cfg, fs::path(cfg.out_dir) / "config.resolved");
    std::cout << "scored " << pairs.size() << " pairs into " << out_path.string() << '\n';
    return 0;
}

std::string study_stem(const data::ImagePair& p)
{
    std::string image = fs::path(p.later_image).stem().string();
    return p.patient_id + "_d" + std::to_string(p.later_date_days) + "_" + image;
}

int cmd_explain(const CommonOptions& o, const std::string& run_dir, std::size_t limit)
{
    auto cfg = resolve(o);
    const fs::path run = run_dir.empty() ? fs::path(cfg.out_dir) : fs::path(run_dir);
    const fs::path out = fs::path(cfg.out_dir) / "overlays";
    fs::create_directories(out);
    const auto exp = pipeline::load_experiment(cfg);
    const auto fit = pipeline::load_fit(run, cfg);
    const auto pairs = data::build_pairs(exp.cohort, cfg.train.task);

    std::vector<interpret::OverlayEntry> index;
    for (const auto& fm : fit.models) {
        auto& model = *fm.model;
        std::size_t written = 0;
        for (const auto& p : data::partition_pairs(pairs, fit.folds, fm.fold).validation) {
            if (written >= limit) break;
            const auto& later = exp.images.get(p.later_image);
            const auto ref_t = data::to_tensor<float>(exp.images.get(p.ref_image));
            const auto later_t = data::to_tensor<float>(later);
            const std::string stem = study_stem(p);

            const auto cam = interpret::grad_cam(model, ref_t, later_t, p.dt_norm, data::Outcome::LR);
            const std::string cam_file = stem + "_gradcam.png";
            interpret::overlay_export(later, cam, out / cam_file, cfg.eval.overlay_alpha);
            index.push_back({cam_file, p.patient_id, p.later_date_days, "gradcam", "LR"});

            if (cfg.train.model.kind == model::ModelKind::Trex && !cfg.train.model.no_dca) {
                nn::NoGradGuard no_grad;
                const auto fwd = model.forward(ref_t, later_t, p.dt_norm);
                const std::size_t n = fwd.f_res.grid_h * fwd.f_res.grid_w;
                for (std::size_t q = 0; q < n; ++q) {
                    const auto attn = interpret::attn_heatmap(*fwd.dca, q, interpret::Direction::ResToFup);
                    const std::string file = stem + "_attn_q" + std::to_string(q) + ".png";
                    interpret::overlay_export(later, attn, out / file, cfg.eval.overlay_alpha);
                    index.push_back({file, p.patient_id, p.later_date_days, "attention", "q" + std::to_string(q)});
                }
            }
            ++written;
        }
    }
    std::ofstream idx(out / "index.csv");
    interpret::write_overlay_index(index, idx);
    if (!idx) throw std::runtime_error("cannot write overlay index");
    io::write_config(cfg, fs::path(cfg.out_dir) / "config.resolved");
    std::cout << "wrote " << index.size() << " overlays to " << out.string() << '\n';
    return 0;
}

int cmd_stats(const std::string& a_path, const std::string& b_path)
{
    const auto a = eval::read_predictions(a_path);
    const auto b = eval::read_predictions(b_path);
    const auto pa = eval::patient_predictions(a);
    const auto pb = eval::patient_predictions(b);
    const auto table = eval::contingency(pa, pb);
    const auto result = eval::mcnemar(table);
    std::cout << "patients " << table.n() << "\n"
              << "both_correct " << table.a << "\nonly_a_correct " << table.b << "\nonly_b_correct " << table.c
              << "\nboth_wrong " << table.d << "\n"
              << "test " << (result.exact ? "exact" : "chi2") << "\np_value " << result.p_value << "\nodds_ratio "
              << result.odds_ratio_text() << '\n';
    return 0;
}

int cmd_ablate(const CommonOptions& o, const std::vector<std::string>& variants, const std::vector<std::size_t>& ks)
{
    const auto base = resolve(o);
    const fs::path out = base.out_dir;
    fs::create_directories(out);
    const auto exp = pipeline::load_experiment(base);

    std::ofstream csv(out / "ablation.csv");
    csv << "variant,bin,n_lr,n_cr,bal_acc_mean,bal_acc_sd,sens_mean,spec_mean\n";
    auto emit = [&](const std::string& name, const eval::BinReport& report) {
        for (const auto& r : report.rows) {
            csv << name << ',' << r.bin << ',' << r.n_lr << ',' << r.n_cr << ','
                << eval::format_optional(r.balanced_accuracy.mean) << ',' << eval::format_optional(r.balanced_accuracy.sd)
                << ',' << eval::format_optional(r.sensitivity.mean) << ',' << eval::format_optional(r.specificity.mean)
                << '\n';
        }
        std::cout << "== " << name << '\n';
        eval::print_report_table(report, std::cout);
    };

    for (const auto& variant : variants) {
        io::RunConfig cfg = base;
        if (variant == "full") {
        } else if (variant == "no_dca" || variant == "no_dt") {
            io::set_config_value(cfg, "model." + variant, "true");
        } else if (variant == "no_balance" || variant == "no_augment") {
            io::set_config_value(cfg, "train." + variant, "true");
        } else if (variant.rfind("encoder=", 0) == 0) {
            io::set_config_value(cfg, "model.encoder", variant.substr(8));
        } else {
            throw io::ConfigError("unknown ablation variant '" + variant + "'");
        }
        cfg.validate();
        const auto fit = train::fit(exp.cohort, exp.images, cfg.train, log_progress);
        const auto records = pipeline::predict_folds(fit, exp, cfg);
        emit(variant, pipeline::save_eval(records, cfg, out / variant));
        if (variant == "full") {
            for (std::size_t k : ks) {
                for (auto mode : {eval::Aggregation::Mean, eval::Aggregation::Max, eval::Aggregation::Vote}) {
                    const auto re = eval::reaggregate(records, k, mode);
                    emit("k" + std::to_string(k) + "_" + std::string(eval::to_string(mode)),
                         eval::bin_report(re, cfg.train.k_folds));
                }
            }
        }
    }
    if (!csv) throw std::runtime_error("cannot write ablation.csv");
    io::write_config(base, out / "config.resolved");
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Longitudinal endoscopy pair classifier"};
    app.require_subcommand(1);

    CommonOptions synth_o, train_o, eval_o, predict_o, explain_o, ablate_o;
    std::string run_dir, aggregation, checkpoint, pairs_path, a_path, b_path;
    std::size_t limit = 8;
    std::vector<std::string> variants{"full", "no_dca", "no_dt", "no_balance", "no_augment", "encoder=tiny", "encoder=small"};
    std::vector<std::size_t> ks{1, 3, 6, 9, 12};

    auto* synth = app.add_subcommand("synth", "generate a synthetic cohort");
    add_common(synth, synth_o);

    auto* train_cmd = app.add_subcommand("train", "k-fold training; writes checkpoints and logs");
    add_common(train_cmd, train_o);

    auto* eval_cmd = app.add_subcommand("eval", "score validation folds and write the binned report");
    add_common(eval_cmd, eval_o);
    eval_cmd->add_option("--run", run_dir, "training output directory (default: --out)");
    eval_cmd->add_option("--aggregation", aggregation, "mean, max or vote");

    auto* predict = app.add_subcommand("predict", "score a CSV of image pairs with one checkpoint");
    add_common(predict, predict_o);
    predict->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    predict->add_option("--pairs", pairs_path, "CSV: ref_image,later_image,delta_days")->required()->check(CLI::ExistingFile);

    auto* explain = app.add_subcommand("explain", "Grad-CAM and attention overlays for validation studies");
    add_common(explain, explain_o);
    explain->add_option("--run", run_dir, "training output directory (default: --out)");
    explain->add_option("--limit", limit, "studies per fold");

    auto* stats = app.add_subcommand("stats", "McNemar test between two prediction files");
    stats->add_option("a", a_path)->required()->check(CLI::ExistingFile);
    stats->add_option("b", b_path)->required()->check(CLI::ExistingFile);

    auto* ablate = app.add_subcommand("ablate", "train and evaluate model variants");
    add_common(ablate, ablate_o);
    ablate->add_option("--variants", variants, "full, no_dca, no_dt, no_balance, no_augment, encoder=<preset>");
    ablate->add_option("--ks", ks, "top-K values re-aggregated from the full model");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(synth_o);
        if (train_cmd->parsed()) return cmd_train(train_o);
        if (eval_cmd->parsed()) return cmd_eval(eval_o, run_dir, aggregation);
        if (predict->parsed()) return cmd_predict(predict_o, checkpoint, pairs_path);
        if (explain->parsed()) return cmd_explain(explain_o, run_dir, limit);
        if (stats->parsed()) return cmd_stats(a_path, b_path);
        if (ablate->parsed()) return cmd_ablate(ablate_o, variants, ks);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
