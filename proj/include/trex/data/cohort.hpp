#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace trex::data {

enum class Outcome { CR = 0, LR = 1 };
enum class StudyKind { PreTnt, Restaging, FollowUp };
enum class Task { Surveillance, Response };
enum class TimeBin { M0, M3_6, M6_12, M12_24, Excluded };

/// Bit flags; a study image may carry any subset.
enum ArtifactTag : std::uint8_t {
    kBlood = 1 << 0,
    kStool = 1 << 1,
    kTelangiectasia = 1 << 2,
    kPoorQuality = 1 << 3,
};
inline constexpr std::uint8_t kAllArtifacts[] = {kBlood, kStool, kTelangiectasia, kPoorQuality};

std::string_view to_string(Outcome o);
std::string_view to_string(StudyKind k);
std::string_view to_string(Task t);
std::string_view to_string(TimeBin b);
std::string_view artifact_name(std::uint8_t single_tag);
std::optional<Outcome> parse_outcome(std::string_view text);
std::optional<StudyKind> parse_study_kind(std::string_view text);
std::optional<TimeBin> parse_time_bin(std::string_view text);
Task parse_task(std::string_view text);
/// "blood|stool" -> flags; throws std::invalid_argument naming an unknown token.
std::uint8_t parse_artifact_tags(std::string_view text);
std::string format_artifact_tags(std::uint8_t tags);

inline constexpr TimeBin kReportedBins[] = {TimeBin::M0, TimeBin::M3_6, TimeBin::M6_12, TimeBin::M12_24};

struct ImageRef {
    std::string path;
    std::uint8_t tags = 0;
    std::optional<Outcome> label;
};

struct Study {
    StudyKind kind = StudyKind::FollowUp;
    int date_days = 0;  // offset from restaging
    std::vector<ImageRef> images;

    std::uint8_t artifact_tags() const;
};

struct PatientRecord {
    std::string patient_id;
    Outcome outcome = Outcome::CR;
    std::vector<Study> studies;  // ordered by date

    const Study* find(StudyKind kind) const;
    /// Date of the label-bearing visit.
    int last_visit_days() const;
};

struct Cohort {
    std::vector<PatientRecord> patients;

    std::size_t count(Outcome o) const;
    /// Throws std::invalid_argument describing the first violated invariant.
    void validate() const;
    bool operator==(const Cohort& other) const;
};

class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline constexpr double kDaysPerMonth = 30.4375;
inline constexpr int kDtSpanDays = 730;

/// min(days / 730, 1); negative input violates the contract.
double normalize_dt(int delta_days);

/// M0 iff 0 days; (0,6] months -> M3_6; (6,12] -> M6_12; (12,24] -> M12_24; else Excluded.
TimeBin bin_timepoint(int days_before_last);

/// Every image inherits its patient's outcome (retrospective labelling).
Cohort assign_retrospective_labels(Cohort cohort);

struct ImagePair {
    std::string ref_image;
    std::string later_image;
    double dt_norm = 0.0;
    Outcome label = Outcome::CR;
    Task task = Task::Surveillance;
    std::string patient_id;
    TimeBin bin = TimeBin::M0;
    int later_date_days = 0;
    std::uint8_t later_tags = 0;
};

/// Cartesian reference-study x target-study image pairs per (patient, target study).
/// Surveillance: restaging x each follow-up within 24 months of the last visit.
/// Response: pre-TNT x restaging. Patients missing the reference are skipped
/// with a message appended to `warnings`.
std::vector<ImagePair> build_pairs(const Cohort& cohort, Task task, std::vector<std::string>* warnings = nullptr);

/// Keeps the first pair per later image (single-image models see each image once).
std::vector<ImagePair> unique_later_images(const std::vector<ImagePair>& pairs);

}  // namespace trex::data
