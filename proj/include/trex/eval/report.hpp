#pragma once

#include "trex/eval/metrics.hpp"

#include <filesystem>
#include <iosfwd>

namespace trex::eval {

/// Groups pairs by (patient, later study) and aggregates each group's pair
/// probabilities with topk_aggregate. Records keep first-appearance order.
std::vector<PredictionRecord> make_records(const std::vector<data::ImagePair>& pairs, const std::vector<double>& probs,
                                           std::size_t fold, std::size_t k = 3, Aggregation mode = Aggregation::Mean);

/// Re-aggregates stored pair probabilities with a different rule.
std::vector<PredictionRecord> reaggregate(std::vector<PredictionRecord> records, std::size_t k, Aggregation mode);

inline constexpr const char* kPredictionsHeader = "patient_id,date_days,bin,fold,prob,truth,tags";

void write_predictions(std::span<const PredictionRecord> records, std::ostream& out);
void write_predictions(std::span<const PredictionRecord> records, const std::filesystem::path& path);
std::vector<PredictionRecord> read_predictions(std::istream& in, const std::string& name = "<stream>");
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

void write_report_csv(const BinReport& report, std::ostream& out);
void write_report_csv(const BinReport& report, const std::filesystem::path& path);
/// Aligned text table of the main rows followed by the artifact subgroups.
void print_report_table(const BinReport& report, std::ostream& out);

/// "0.8123" or "NA".
std::string format_optional(const std::optional<double>& v, int precision = 4);

}  // namespace trex::eval
