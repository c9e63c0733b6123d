#include "trex/eval/report.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace trex::eval {

std::vector<PredictionRecord> make_records(const std::vector<data::ImagePair>& pairs, const std::vector<double>& probs,
                                           std::size_t fold, std::size_t k, Aggregation mode)
{
    if (pairs.size() != probs.size()) throw std::invalid_argument("make_records: pair and probability counts differ");
    std::vector<PredictionRecord> records;
    std::map<std::pair<std::string, int>, std::size_t> index;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = pairs[i];
        if (!(probs[i] >= 0.0 && probs[i] <= 1.0)) throw std::invalid_argument("make_records: probability outside [0,1]");
        auto [it, fresh] = index.try_emplace({p.patient_id, p.later_date_days}, records.size());
        if (fresh) {
            PredictionRecord r;
            r.patient_id = p.patient_id;
            r.date_days = p.later_date_days;
            r.bin = p.bin;
            r.fold = fold;
            r.truth = p.label;
            records.push_back(std::move(r));
        }
        auto& r = records[it->second];
        r.pair_probs.push_back(probs[i]);
        r.tags |= p.later_tags;
    }
    for (auto& r : records) r.prob = topk_aggregate(r.pair_probs, k, mode);
    return records;
}

std::vector<PredictionRecord> reaggregate(std::vector<PredictionRecord> records, std::size_t k, Aggregation mode)
{
    for (auto& r : records) {
        if (r.pair_probs.empty()) throw std::invalid_argument("reaggregate: record without pair probabilities");
        r.prob = topk_aggregate(r.pair_probs, k, mode);
    }
    return records;
}

std::string format_optional(const std::optional<double>& v, int precision)
{
    if (!v) return "NA";
    std::ostringstream os;
    os << std::fixed << std::setprecision(precision) << *v;
    return os.str();
}

void write_predictions(std::span<const PredictionRecord> records, std::ostream& out)
{
    out << kPredictionsHeader << '\n';
    for (const auto& r : records) {
        char prob[32];
        std::snprintf(prob, sizeof prob, "%.9g", r.prob);
        out << r.patient_id << ',' << r.date_days << ',' << data::to_string(r.bin) << ',' << r.fold << ',' << prob << ','
            << data::to_string(r.truth) << ',' << data::format_artifact_tags(r.tags) << '\n';
    }
}

void write_predictions(std::span<const PredictionRecord> records, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write predictions " + path.string());
    write_predictions(records, out);
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<PredictionRecord> read_predictions(std::istream& in, const std::string& name)
{
    auto fail = [&](std::size_t line, const std::string& what) {
        return std::runtime_error(name + ":" + std::to_string(line) + ": " + what);
    };
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw fail(1, "missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kPredictionsHeader) throw fail(1, "expected header '" + std::string(kPredictionsHeader) + "'");
    std::vector<PredictionRecord> out;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::string field;
        std::istringstream ls(line);
        while (std::getline(ls, field, ',')) f.push_back(field);
        if (line.back() == ',') f.emplace_back();
        if (f.size() != 7) throw fail(line_no, "expected 7 fields, got " + std::to_string(f.size()));
        PredictionRecord r;
        r.patient_id = f[0];
        auto parse_int = [&](const std::string& s, auto& v, const char* what) {
            auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc{} || end != s.data() + s.size()) throw fail(line_no, std::string("bad ") + what + " '" + s + "'");
        };
        parse_int(f[1], r.date_days, "date_days");
        const auto bin = data::parse_time_bin(f[2]);
        if (!bin) throw fail(line_no, "unknown bin '" + f[2] + "'");
        r.bin = *bin;
        parse_int(f[3], r.fold, "fold");
        try {
            std::size_t used = 0;
            r.prob = std::stod(f[4], &used);
            if (used != f[4].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw fail(line_no, "bad prob '" + f[4] + "'");
        }
        if (!(r.prob >= 0.0 && r.prob <= 1.0)) throw fail(line_no, "prob outside [0,1]");
        r.pair_probs = {r.prob};
        const auto truth = data::parse_outcome(f[5]);
        if (!truth) throw fail(line_no, "unknown truth '" + f[5] + "'");
        r.truth = *truth;
        try {
            r.tags = data::parse_artifact_tags(f[6]);
        } catch (const std::invalid_argument& e) {
            throw fail(line_no, e.what());
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open predictions " + path.string());
    return read_predictions(in, path.string());
}

namespace {

std::vector<const ReportRow*> all_rows(const BinReport& report)
{
    std::vector<const ReportRow*> rows;
    for (const auto& r : report.rows) rows.push_back(&r);
    for (const auto& r : report.subgroups) rows.push_back(&r);
    return rows;
}

}  // namespace

void write_report_csv(const BinReport& report, std::ostream& out)
{
    out << "group,bin,n_lr,n_cr,folds,bal_acc_mean,bal_acc_sd,sens_mean,sens_sd,spec_mean,spec_sd\n";
    for (const auto* r : all_rows(report)) {
        out << r->group << ',' << r->bin << ',' << r->n_lr << ',' << r->n_cr << ',' << r->folds_used << ','
            << format_optional(r->balanced_accuracy.mean, 6) << ',' << format_optional(r->balanced_accuracy.sd, 6) << ','
            << format_optional(r->sensitivity.mean, 6) << ',' << format_optional(r->sensitivity.sd, 6) << ','
            << format_optional(r->specificity.mean, 6) << ',' << format_optional(r->specificity.sd, 6) << '\n';
    }
}

void write_report_csv(const BinReport& report, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write report " + path.string());
    write_report_csv(report, out);
}

void print_report_table(const BinReport& report, std::ostream& out)
{
    auto cell = [](const Summary& s) {
        if (!s.mean) return std::string("NA");
        return format_optional(s.mean, 3) + " +/- " + format_optional(s.sd, 3);
    };
    out << std::left << std::setw(16) << "group" << std::setw(8) << "bin" << std::right << std::setw(6) << "n_lr"
        << std::setw(6) << "n_cr" << std::setw(20) << "balanced_acc" << std::setw(20) << "sensitivity" << std::setw(20)
        << "specificity" << '\n';
    const auto rows = all_rows(report);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i == report.rows.size()) out << '\n';
        const auto* r = rows[i];
        out << std::left << std::setw(16) << r->group << std::setw(8) << r->bin << std::right << std::setw(6) << r->n_lr
            << std::setw(6) << r->n_cr << std::setw(20) << cell(r->balanced_accuracy) << std::setw(20)
            << cell(r->sensitivity) << std::setw(20) << cell(r->specificity) << '\n';
    }
}

}  // namespace trex::eval
