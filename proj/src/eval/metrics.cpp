#include "trex/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

namespace trex::eval {

std::string_view to_string(Aggregation a)
{
    switch (a) {
    case Aggregation::Mean: return "mean";
    case Aggregation::Max: return "max";
    case Aggregation::Vote: return "vote";
    }
    return "?";
}

Aggregation parse_aggregation(std::string_view text)
{
    if (text == "mean") return Aggregation::Mean;
    if (text == "max") return Aggregation::Max;
    if (text == "vote") return Aggregation::Vote;
    throw std::invalid_argument("unknown aggregation '" + std::string(text) + "' (expected mean, max or vote)");
}

double topk_aggregate(std::span<const double> probs, std::size_t k, Aggregation mode)
{
    if (probs.empty()) throw std::invalid_argument("topk_aggregate: empty probability list");
    if (k == 0) throw std::invalid_argument("topk_aggregate: k must be at least 1");
    std::vector<double> sorted(probs.begin(), probs.end());
    const std::size_t n = std::min(k, sorted.size());
    std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n), sorted.end(), std::greater<>());
    switch (mode) {
    case Aggregation::Max: return sorted.front();
    case Aggregation::Vote: {
        const auto votes = std::count_if(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n),
                                         [](double p) { return p >= 0.5; });
        return static_cast<double>(votes) / static_cast<double>(n);
    }
    case Aggregation::Mean: break;
    }
    // extended accumulator: the mean of a few doubles comes out correctly rounded
    long double sum = 0.0L;
    for (std::size_t i = 0; i < n; ++i) sum += sorted[i];
    return static_cast<double>(sum / static_cast<long double>(n));
}

BinaryMetrics metrics_from_counts(std::size_t tp, std::size_t fn, std::size_t tn, std::size_t fp)
{
    BinaryMetrics m{tp, fn, tn, fp, {}, {}, {}};
    if (tp + fn > 0) m.sensitivity = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (tn + fp > 0) m.specificity = static_cast<double>(tn) / static_cast<double>(tn + fp);
    if (m.sensitivity && m.specificity) m.balanced_accuracy = (*m.sensitivity + *m.specificity) / 2.0;
    return m;
}

BinaryMetrics binary_metrics(std::span<const PredictionRecord> records)
{
    std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
    for (const auto& r : records) {
        const bool lr = r.predicted() == Outcome::LR;
        if (r.truth == Outcome::LR) {
            (lr ? tp : fn)++;
        } else {
            (lr ? fp : tn)++;
        }
    }
    return metrics_from_counts(tp, fn, tn, fp);
}

double roc_auc(std::span<const double> scores, std::span<const Outcome> truth)
{
    if (scores.size() != truth.size()) throw std::invalid_argument("roc_auc: score and label counts differ");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Twice the mid-rank sum of positives, kept integral.
    unsigned long long twice_rank_pos = 0, n_pos = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        const unsigned long long twice_mid = (i + 1) + (j + 1);
        for (std::size_t t = i; t <= j; ++t) {
            if (truth[idx[t]] == Outcome::LR) {
                twice_rank_pos += twice_mid;
                ++n_pos;
            }
        }
        i = j + 1;
    }
    const unsigned long long n_neg = scores.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("roc_auc: both classes are required");
    const unsigned long long numerator = twice_rank_pos - n_pos * (n_pos + 1);
    return static_cast<double>(numerator) / static_cast<double>(2 * n_pos * n_neg);
}

double roc_auc(std::span<const PredictionRecord> records)
{
    std::vector<double> s;
    std::vector<Outcome> t;
    for (const auto& r : records) {
        s.push_back(r.prob);
        t.push_back(r.truth);
    }
    return roc_auc(s, t);
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const Outcome> truth)
{
    if (scores.size() != truth.size()) throw std::invalid_argument("roc_curve: score and label counts differ");
    const auto n_pos = static_cast<double>(std::count(truth.begin(), truth.end(), Outcome::LR));
    const auto n_neg = static_cast<double>(truth.size()) - n_pos;
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("roc_curve: both classes are required");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<RocPoint> curve{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        (truth[idx[i]] == Outcome::LR ? tp : fp) += 1;
        if (i + 1 == idx.size() || scores[idx[i + 1]] != scores[idx[i]]) curve.push_back({scores[idx[i]], fp / n_neg, tp / n_pos});
    }
    return curve;
}

Outcome majority_vote(std::span<const Outcome> votes)
{
    if (votes.empty()) throw std::invalid_argument("majority_vote: no votes");
    const auto lr = std::count(votes.begin(), votes.end(), Outcome::LR);
    return 2 * static_cast<std::size_t>(lr) >= votes.size() ? Outcome::LR : Outcome::CR;
}

std::vector<PatientPrediction> patient_predictions(std::span<const PredictionRecord> records)
{
    std::map<std::string, std::pair<std::vector<Outcome>, Outcome>> by_patient;
    for (const auto& r : records) {
        auto& [votes, truth] = by_patient[r.patient_id];
        votes.push_back(r.predicted());
        truth = r.truth;
    }
    std::vector<PatientPrediction> out;
    for (const auto& [id, entry] : by_patient) out.push_back({id, majority_vote(entry.first), entry.second});
    return out;
}

ContingencyTable contingency(std::span<const PatientPrediction> model_a, std::span<const PatientPrediction> model_b)
{
    std::map<std::string, const PatientPrediction*> b_index;
    for (const auto& p : model_b) b_index[p.patient_id] = &p;
    if (b_index.size() != model_a.size()) {
        throw std::invalid_argument("contingency: prediction sets cover " + std::to_string(model_a.size()) + " and " +
                                    std::to_string(b_index.size()) + " patients");
    }
    ContingencyTable t;
    for (const auto& pa : model_a) {
        auto it = b_index.find(pa.patient_id);
        if (it == b_index.end()) throw std::invalid_argument("contingency: patient " + pa.patient_id + " missing from second set");
        if (it->second->truth != pa.truth) throw std::invalid_argument("contingency: conflicting truth for " + pa.patient_id);
        const bool a_ok = pa.predicted == pa.truth, b_ok = it->second->predicted == pa.truth;
        if (a_ok && b_ok) {
            ++t.a;
        } else if (a_ok) {
            ++t.b;
        } else if (b_ok) {
            ++t.c;
        } else {
            ++t.d;
        }
    }
    return t;
}

std::string McNemarResult::odds_ratio_text() const
{
    if (!odds_ratio) return "NA";
    if (std::isinf(*odds_ratio)) return "inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", *odds_ratio);
    return buf;
}

double mcnemar_exact_p(std::size_t b, std::size_t c)
{
    const std::size_t n = b + c;
    if (n == 0) return 1.0;
    const std::size_t m = std::min(b, c);
    long double tail = 0.0L;
    for (std::size_t i = 0; i <= m; ++i) {
        const long double log_term = std::lgamma(static_cast<long double>(n) + 1) - std::lgamma(static_cast<long double>(i) + 1) -
                                     std::lgamma(static_cast<long double>(n - i) + 1) - static_cast<long double>(n) * std::log(2.0L);
        tail += std::exp(log_term);
    }
    return static_cast<double>(std::min(1.0L, 2.0L * tail));
}

double mcnemar_chi2_p(std::size_t b, std::size_t c)
{
    const std::size_t n = b + c;
    if (n == 0) return 1.0;
    const double diff = std::max(0.0, std::fabs(static_cast<double>(b) - static_cast<double>(c)) - 1.0);
    const double chi2 = diff * diff / static_cast<double>(n);
    return std::erfc(std::sqrt(chi2 / 2.0));
}

McNemarResult mcnemar(const ContingencyTable& t)
{
    McNemarResult r;
    const std::size_t n = t.b + t.c;
    r.exact = n < 25;
    r.p_value = r.exact ? mcnemar_exact_p(t.b, t.c) : mcnemar_chi2_p(t.b, t.c);
    if (n > 0) {
        r.odds_ratio = t.c == 0 ? std::numeric_limits<double>::infinity()
                                : static_cast<double>(t.b) / static_cast<double>(t.c);
    }
    return r;
}

Summary summarize(std::span<const double> values)
{
    Summary s;
    if (values.empty()) return s;
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    s.mean = mean;
    s.sd = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    return s;
}

namespace {

ReportRow make_row(std::string group, std::string bin, std::span<const PredictionRecord* const> records, std::size_t folds)
{
    ReportRow row{std::move(group), std::move(bin), 0, 0, 0, {}, {}, {}, {}};
    std::vector<std::array<std::size_t, 4>> counts(folds, {0, 0, 0, 0});
    for (const auto* r : records) {
        if (r->fold >= folds) throw std::invalid_argument("bin_report: record fold " + std::to_string(r->fold) + " out of range");
        const bool lr = r->predicted() == Outcome::LR;
        auto& c = counts[r->fold];
        if (r->truth == Outcome::LR) {
            ++row.n_lr;
            ++c[lr ? 0 : 1];
        } else {
            ++row.n_cr;
            ++c[lr ? 3 : 2];
        }
    }
    std::vector<double> sens, spec, bacc;
    for (const auto& c : counts) {
        row.per_fold.push_back(metrics_from_counts(c[0], c[1], c[2], c[3]));
        const auto& m = row.per_fold.back();
        if (m.balanced_accuracy) {
            sens.push_back(*m.sensitivity);
            spec.push_back(*m.specificity);
            bacc.push_back(*m.balanced_accuracy);
        }
    }
    row.folds_used = bacc.size();
    row.sensitivity = summarize(sens);
    row.specificity = summarize(spec);
    row.balanced_accuracy = summarize(bacc);
    if (row.sensitivity.mean) row.balanced_accuracy.mean = (*row.sensitivity.mean + *row.specificity.mean) / 2.0;
    return row;
}

}  // namespace

BinReport bin_report(std::span<const PredictionRecord> records, std::size_t folds)
{
    if (folds == 0) throw std::invalid_argument("bin_report: folds must be positive");
    BinReport report;
    auto select = [&](auto&& pred) {
        std::vector<const PredictionRecord*> out;
        for (const auto& r : records) {
            if (pred(r)) out.push_back(&r);
        }
        return out;
    };
    for (auto bin : data::kReportedBins) {
        const auto sel = select([&](const PredictionRecord& r) { return r.bin == bin; });
        report.rows.push_back(make_row("all", std::string(data::to_string(bin)), sel, folds));
    }
    report.rows.push_back(make_row("all", "all", select([](const PredictionRecord&) { return true; }), folds));
    for (auto tag : data::kAllArtifacts) {
        for (auto bin : data::kReportedBins) {
            const auto sel = select([&](const PredictionRecord& r) { return r.bin == bin && (r.tags & tag); });
            report.subgroups.push_back(make_row(std::string(data::artifact_name(tag)), std::string(data::to_string(bin)), sel, folds));
        }
    }
    return report;
}

const ReportRow* BinReport::find(std::string_view group, std::string_view bin) const
{
    for (const auto* list : {&rows, &subgroups}) {
        for (const auto& r : *list) {
            if (r.group == group && r.bin == bin) return &r;
        }
    }
    return nullptr;
}

}  // namespace trex::eval
