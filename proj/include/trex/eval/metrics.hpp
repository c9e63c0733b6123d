#pragma once

#include "trex/data/cohort.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace trex::eval {

using data::Outcome;
using data::TimeBin;

enum class Aggregation { Mean, Max, Vote };
std::string_view to_string(Aggregation a);
Aggregation parse_aggregation(std::string_view text);

/// Combines the min(k, n) largest LR probabilities: their mean, their maximum
/// (the overall max), or the fraction voting LR (p >= 0.5).
double topk_aggregate(std::span<const double> probs, std::size_t k = 3, Aggregation mode = Aggregation::Mean);

/// One scored study: the later image set of a (patient, follow-up) pairing.
struct PredictionRecord {
    std::string patient_id;
    int date_days = 0;
    TimeBin bin = TimeBin::M0;
    std::size_t fold = 0;
    std::vector<double> pair_probs;
    double prob = 0.0;  // aggregated
    Outcome truth = Outcome::CR;
    std::uint8_t tags = 0;

    Outcome predicted() const { return prob >= 0.5 ? Outcome::LR : Outcome::CR; }
};

/// LR is the positive class. Components with an empty denominator are absent.
struct BinaryMetrics {
    std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
    std::optional<double> sensitivity, specificity, balanced_accuracy;
};

BinaryMetrics metrics_from_counts(std::size_t tp, std::size_t fn, std::size_t tn, std::size_t fp);
BinaryMetrics binary_metrics(std::span<const PredictionRecord> records);

/// Mann-Whitney AUC with mid-ranks for ties. Throws if either class is missing.
double roc_auc(std::span<const double> scores, std::span<const Outcome> truth);
double roc_auc(std::span<const PredictionRecord> records);

/// ROC operating points (fpr, tpr), from the strictest threshold down.
struct RocPoint {
    double threshold, fpr, tpr;
};
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const Outcome> truth);

/// Modal class; ties go to LR. Throws on empty input.
Outcome majority_vote(std::span<const Outcome> votes);

/// Patient-level prediction per (fold, patient): majority vote over study predictions.
struct PatientPrediction {
    std::string patient_id;
    Outcome predicted = Outcome::CR;
    Outcome truth = Outcome::CR;
};
std::vector<PatientPrediction> patient_predictions(std::span<const PredictionRecord> records);

/// a: both correct, b: only A correct, c: only B correct, d: both wrong.
struct ContingencyTable {
    std::size_t a = 0, b = 0, c = 0, d = 0;
    std::size_t n() const { return a + b + c + d; }
};
ContingencyTable contingency(std::span<const PatientPrediction> model_a, std::span<const PatientPrediction> model_b);

struct McNemarResult {
    double p_value = 1.0;
    bool exact = true;
    std::optional<double> odds_ratio;  // b / c; +inf when c == 0 < b; absent when b + c == 0
    std::string odds_ratio_text() const;
};

/// Two-sided; exact binomial when b + c < 25, else chi-square with continuity correction.
McNemarResult mcnemar(const ContingencyTable& table);
double mcnemar_exact_p(std::size_t b, std::size_t c);
double mcnemar_chi2_p(std::size_t b, std::size_t c);

struct Summary {
    std::optional<double> mean, sd;
};

/// One row of the binned report: a (group, bin) cell summarised over folds.
/// Means use the folds where sensitivity and specificity are both defined,
/// and balanced accuracy mean is (sensitivity mean + specificity mean) / 2.
struct ReportRow {
    std::string group;  // "all" or an artifact name
    std::string bin;    // a TimeBin name or "all"
    std::size_t n_lr = 0, n_cr = 0;
    std::size_t folds_used = 0;
    std::vector<BinaryMetrics> per_fold;
    Summary balanced_accuracy, sensitivity, specificity;
};

struct BinReport {
    std::vector<ReportRow> rows;       // group "all": one per reported bin, then "all"
    std::vector<ReportRow> subgroups;  // per artifact tag and bin
    const ReportRow* find(std::string_view group, std::string_view bin) const;
};

BinReport bin_report(std::span<const PredictionRecord> records, std::size_t folds);

/// Sample standard deviation; 0 for a single value; absent for none.
Summary summarize(std::span<const double> values);

}  // namespace trex::eval
