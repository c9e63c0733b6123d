#include "trex/train/fit.hpp"

#include "trex/eval/predict.hpp"
#include "trex/nn/ops.hpp"
#include "trex/util/seed.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <atomic>
#include <mutex>
#include <ostream>
#include <thread>

namespace trex::train {

void TrainConfig::validate() const
{
    if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("train: lr must be positive");
    if (epochs == 0) throw std::invalid_argument("train: epochs must be positive");
    if (warmup_epochs >= epochs) throw std::invalid_argument("train: warmup_epochs must be below epochs");
    if (batch == 0) throw std::invalid_argument("train: batch must be positive");
    if (k_folds < 2) throw std::invalid_argument("train: k_folds must be at least 2");
    if (grad_clip < 0) throw std::invalid_argument("train: grad_clip must be non-negative");
    if (threads == 0) throw std::invalid_argument("train: threads must be positive");
    model.validate();
}

double lr_at(std::size_t epoch, const TrainConfig& cfg)
{
    if (epoch >= cfg.epochs) {
        throw std::out_of_range("lr_at: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.epochs) + ")");
    }
    if (epoch < cfg.warmup_epochs) {
        return cfg.lr * static_cast<double>(epoch + 1) / static_cast<double>(cfg.warmup_epochs);
    }
    if (cfg.constant_after_warmup) return cfg.lr;
    return cfg.lr * static_cast<double>(cfg.epochs - epoch) / static_cast<double>(cfg.epochs - cfg.warmup_epochs);
}

std::uint64_t fold_init_seed(const TrainConfig& cfg, std::size_t fold)
{
    return derive_seed(cfg.seed, {0x1417, fold});
}

namespace {

double pair_balanced_accuracy(const std::vector<data::ImagePair>& pairs, const std::vector<double>& probs)
{
    std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const bool pred_lr = probs[i] >= 0.5;
        if (pairs[i].label == data::Outcome::LR) {
            (pred_lr ? tp : fn)++;
        } else {
            (pred_lr ? fp : tn)++;
        }
    }
    if (tp + fn == 0 || tn + fp == 0) return std::numeric_limits<double>::quiet_NaN();
    return 0.5 * (static_cast<double>(tp) / static_cast<double>(tp + fn) + static_cast<double>(tn) / static_cast<double>(tn + fp));
}

// Deterministic class-stratified subset used for per-epoch validation logging.
std::vector<data::ImagePair> validation_subset(const std::vector<data::ImagePair>& pairs, std::size_t cap, std::uint64_t seed)
{
    if (cap == 0 || pairs.size() <= cap) return pairs;
    std::vector<std::size_t> idx(pairs.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::stable_partition(idx.begin(), idx.end(), [&](std::size_t i) { return pairs[i].label == data::Outcome::LR; });
    const auto n_lr = static_cast<std::size_t>(std::count_if(pairs.begin(), pairs.end(),
                                                             [](const auto& p) { return p.label == data::Outcome::LR; }));
    const std::size_t take_lr = std::min(n_lr, std::max<std::size_t>(1, cap / 2));
    const std::size_t take_cr = std::min(pairs.size() - n_lr, cap - take_lr);
    std::vector<data::ImagePair> out;
    for (std::size_t i = 0; i < take_lr; ++i) out.push_back(pairs[idx[i]]);
    for (std::size_t i = 0; i < take_cr; ++i) out.push_back(pairs[idx[n_lr + i]]);
    return out;
}

}  // namespace

FoldModel fit_fold(const std::vector<data::ImagePair>& train_pairs, const std::vector<data::ImagePair>& val_pairs,
                   const data::ImageStore& images, const TrainConfig& cfg, std::size_t fold, std::vector<EpochLog>* log,
                   const FitProgress& progress)
{
    cfg.validate();
    const bool single = cfg.model.kind == model::ModelKind::Si;
    const auto train = single ? data::unique_later_images(train_pairs) : train_pairs;
    const auto val = validation_subset(single ? data::unique_later_images(val_pairs) : val_pairs, cfg.val_log_pairs,
                                       derive_seed(cfg.seed, {0x7a1, fold}));

    FoldModel out;
    out.fold = fold;
    out.model = std::make_unique<model::PairModel<float>>(cfg.model, fold_init_seed(cfg, fold));
    auto& net = *out.model;
    const auto params = parameter_list(net.params());
    auto adam = AdamState<float>::for_params(params);
    data::BatchStream stream(train, cfg.batch, !cfg.no_balance, derive_seed(cfg.seed, {0xba7c, fold}), cfg.batches_per_epoch);
    const float inv_batch = 1.0f / static_cast<float>(cfg.batch);

    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_at(epoch, cfg);
        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        for (const auto& batch : stream.next_epoch()) {
            net.params().zero_grad();
            for (std::size_t slot = 0; slot < batch.size(); ++slot) {
                const auto& pair = train[batch[slot]];
                std::mt19937_64 rng(derive_seed(cfg.seed, {fold, step, slot}));
                auto load = [&](const std::string& path) {
                    const auto& img = images.get(path);
                    return data::to_tensor<float>(cfg.no_augment ? img : data::augment(img, rng));
                };
                const auto ref = load(pair.ref_image);
                const auto later = load(pair.later_image);
                const auto logits = net.forward(ref, later, pair.dt_norm, &rng).logits;
                const auto loss = nn::cross_entropy(logits, static_cast<std::size_t>(pair.label));
                const double value = loss.item();
                if (!std::isfinite(value)) {
                    throw TrainingAborted("fold " + std::to_string(fold) + " epoch " + std::to_string(epoch) + " step " +
                                          std::to_string(step) + ": non-finite loss on pair " + pair.ref_image + " -> " +
                                          pair.later_image);
                }
                loss_sum += value;
                ++loss_count;
                nn::scale(loss, inv_batch).backward();
            }
            if (cfg.grad_clip > 0) clip_grad_norm(params, cfg.grad_clip);
            try {
                adam_step(params, adam, lr);
            } catch (const nn::NumericError& e) {
                throw TrainingAborted("fold " + std::to_string(fold) + " epoch " + std::to_string(epoch) + " step " +
                                      std::to_string(step) + ": " + e.what());
            }
            ++step;
        }
        EpochLog entry{fold, epoch, lr, loss_sum / static_cast<double>(std::max<std::size_t>(1, loss_count)),
                       std::numeric_limits<double>::quiet_NaN()};
        if (!val.empty()) entry.val_bal_acc = pair_balanced_accuracy(val, eval::predict_pairs(net, val, images));
        if (log) log->push_back(entry);
        if (progress) progress(entry);
        out.epoch = epoch;
    }
    net.params().zero_grad();
    return out;
}

FitResult fit(const data::Cohort& cohort, const data::ImageStore& images, const TrainConfig& cfg, const FitProgress& progress)
{
    cfg.validate();
    FitResult result;
    result.folds = data::split_folds(cohort, cfg.k_folds, derive_seed(cfg.seed, {0xf01d}));
    const auto pairs = data::build_pairs(cohort, cfg.task);
    result.models.resize(cfg.k_folds);
    std::vector<std::vector<EpochLog>> logs(cfg.k_folds);
    std::mutex progress_mutex;
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto run = [&](std::size_t fold) {
        try {
            const auto split = data::partition_pairs(pairs, result.folds, fold);
            FitProgress locked;
            if (progress) {
                locked = [&](const EpochLog& e) {
                    std::lock_guard lock(progress_mutex);
                    progress(e);
                };
            }
            result.models[fold] = fit_fold(split.train, split.validation, images, cfg, fold, &logs[fold], locked);
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    };

    const std::size_t workers = std::min(cfg.threads, cfg.k_folds);
    if (workers <= 1) {
        for (std::size_t f = 0; f < cfg.k_folds && !failure; ++f) run(f);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t f; (f = next++) < cfg.k_folds;) run(f);
            });
        }
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    for (auto& l : logs) result.log.insert(result.log.end(), l.begin(), l.end());
    return result;
}

void write_training_log(const std::vector<EpochLog>& log, std::ostream& out)
{
    out << "fold,epoch,lr,train_loss,val_bal_acc\n";
    for (const auto& e : log) {
        out << e.fold << ',' << e.epoch << ',' << std::setprecision(9) << e.lr << ',' << e.train_loss << ',';
        if (std::isnan(e.val_bal_acc)) {
            out << "NA";
        } else {
            out << e.val_bal_acc;
        }
        out << '\n';
    }
}

}  // namespace trex::train
