#include "trex/data/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

namespace trex::data {

std::string_view to_string(Outcome o)
{
    return o == Outcome::LR ? "LR" : "CR";
}

std::string_view to_string(StudyKind k)
{
    switch (k) {
    case StudyKind::PreTnt: return "pre_tnt";
    case StudyKind::Restaging: return "restaging";
    case StudyKind::FollowUp: return "follow_up";
    }
    return "?";
}

std::string_view to_string(Task t)
{
    return t == Task::Response ? "response" : "surveillance";
}

std::string_view to_string(TimeBin b)
{
    switch (b) {
    case TimeBin::M0: return "0";
    case TimeBin::M3_6: return "3-6";
    case TimeBin::M6_12: return "6-12";
    case TimeBin::M12_24: return "12-24";
    case TimeBin::Excluded: return "excluded";
    }
    return "?";
}

std::string_view artifact_name(std::uint8_t single_tag)
{
    switch (single_tag) {
    case kBlood: return "blood";
    case kStool: return "stool";
    case kTelangiectasia: return "telangiectasia";
    case kPoorQuality: return "poor_quality";
    default: return "?";
    }
}

std::optional<Outcome> parse_outcome(std::string_view text)
{
    if (text == "CR") return Outcome::CR;
    if (text == "LR") return Outcome::LR;
    return std::nullopt;
}

std::optional<StudyKind> parse_study_kind(std::string_view text)
{
    if (text == "pre_tnt") return StudyKind::PreTnt;
    if (text == "restaging") return StudyKind::Restaging;
    if (text == "follow_up") return StudyKind::FollowUp;
    return std::nullopt;
}

std::optional<TimeBin> parse_time_bin(std::string_view text)
{
    for (TimeBin b : {TimeBin::M0, TimeBin::M3_6, TimeBin::M6_12, TimeBin::M12_24, TimeBin::Excluded}) {
        if (to_string(b) == text) return b;
    }
    return std::nullopt;
}

Task parse_task(std::string_view text)
{
    if (text == "surveillance") return Task::Surveillance;
    if (text == "response") return Task::Response;
    throw std::invalid_argument("unknown task '" + std::string(text) + "' (expected surveillance or response)");
}

std::uint8_t parse_artifact_tags(std::string_view text)
{
    std::uint8_t tags = 0;
    while (!text.empty()) {
        const auto bar = text.find('|');
        const auto token = text.substr(0, bar);
        bool known = false;
        for (auto tag : kAllArtifacts) {
            if (artifact_name(tag) == token) {
                tags |= tag;
                known = true;
            }
        }
        if (!known) throw std::invalid_argument("unknown artifact tag '" + std::string(token) + "'");
        if (bar == std::string_view::npos) break;
        text.remove_prefix(bar + 1);
    }
    return tags;
}

std::string format_artifact_tags(std::uint8_t tags)
{
    std::string out;
    for (auto tag : kAllArtifacts) {
        if (tags & tag) {
            if (!out.empty()) out += '|';
            out += artifact_name(tag);
        }
    }
    return out;
}

std::uint8_t Study::artifact_tags() const
{
    std::uint8_t tags = 0;
    for (const auto& image : images) tags |= image.tags;
    return tags;
}

const Study* PatientRecord::find(StudyKind kind) const
{
    for (const auto& s : studies) {
        if (s.kind == kind) return &s;
    }
    return nullptr;
}

int PatientRecord::last_visit_days() const
{
    int last = 0;
    for (const auto& s : studies) last = std::max(last, s.date_days);
    return last;
}

std::size_t Cohort::count(Outcome o) const
{
    return static_cast<std::size_t>(
        std::count_if(patients.begin(), patients.end(), [o](const PatientRecord& p) { return p.outcome == o; }));
}

void Cohort::validate() const
{
    std::unordered_set<std::string> ids;
    std::unordered_set<std::string> paths;
    for (const auto& p : patients) {
        if (!ids.insert(p.patient_id).second) throw std::invalid_argument("duplicate patient id " + p.patient_id);
        int pre = 0, restaging = 0;
        for (std::size_t i = 0; i < p.studies.size(); ++i) {
            const auto& s = p.studies[i];
            if (i && s.date_days <= p.studies[i - 1].date_days) {
                throw std::invalid_argument("patient " + p.patient_id + ": studies not strictly ordered by date");
            }
            if (s.kind == StudyKind::PreTnt) ++pre;
            if (s.kind == StudyKind::Restaging) {
                ++restaging;
                if (s.date_days != 0) throw std::invalid_argument("patient " + p.patient_id + ": restaging date must be 0");
            }
            if (s.kind == StudyKind::FollowUp && s.date_days <= 0) {
                throw std::invalid_argument("patient " + p.patient_id + ": follow-up dates must be positive");
            }
            if (s.kind == StudyKind::PreTnt && s.date_days >= 0) {
                throw std::invalid_argument("patient " + p.patient_id + ": pre-TNT study must precede restaging");
            }
            for (const auto& img : s.images) {
                if (!paths.insert(img.path).second) throw std::invalid_argument("duplicate image id " + img.path);
            }
        }
        if (pre > 1 || restaging > 1) {
            throw std::invalid_argument("patient " + p.patient_id + ": more than one pre-TNT or restaging study");
        }
    }
}

bool Cohort::operator==(const Cohort& other) const
{
    auto same_image = [](const ImageRef& a, const ImageRef& b) {
        return a.path == b.path && a.tags == b.tags && a.label == b.label;
    };
    if (patients.size() != other.patients.size()) return false;
    for (std::size_t i = 0; i < patients.size(); ++i) {
        const auto& a = patients[i];
        const auto& b = other.patients[i];
        if (a.patient_id != b.patient_id || a.outcome != b.outcome || a.studies.size() != b.studies.size()) return false;
        for (std::size_t s = 0; s < a.studies.size(); ++s) {
            const auto& sa = a.studies[s];
            const auto& sb = b.studies[s];
            if (sa.kind != sb.kind || sa.date_days != sb.date_days || sa.images.size() != sb.images.size()) return false;
            for (std::size_t k = 0; k < sa.images.size(); ++k) {
                if (!same_image(sa.images[k], sb.images[k])) return false;
            }
        }
    }
    return true;
}

double normalize_dt(int delta_days)
{
    if (delta_days < 0) throw ContractViolation("time gap must be non-negative, got " + std::to_string(delta_days));
    return std::min(static_cast<double>(delta_days) / kDtSpanDays, 1.0);
}

TimeBin bin_timepoint(int days_before_last)
{
    if (days_before_last < 0) {
        throw ContractViolation("days before last visit must be non-negative, got " + std::to_string(days_before_last));
    }
    if (days_before_last == 0) return TimeBin::M0;
    const double months = days_before_last / kDaysPerMonth;
    if (months <= 6.0) return TimeBin::M3_6;
    if (months <= 12.0) return TimeBin::M6_12;
    if (months <= 24.0) return TimeBin::M12_24;
    return TimeBin::Excluded;
}

Cohort assign_retrospective_labels(Cohort cohort)
{
    for (auto& patient : cohort.patients) {
        for (auto& study : patient.studies) {
            for (auto& image : study.images) image.label = patient.outcome;
        }
    }
    return cohort;
}

std::vector<ImagePair> build_pairs(const Cohort& cohort, Task task, std::vector<std::string>* warnings)
{
    std::vector<ImagePair> pairs;
    const StudyKind ref_kind = task == Task::Surveillance ? StudyKind::Restaging : StudyKind::PreTnt;
    for (const auto& patient : cohort.patients) {
        const Study* ref = patient.find(ref_kind);
        if (!ref || ref->images.empty()) {
            if (warnings) {
                warnings->push_back("patient " + patient.patient_id + " has no " + std::string(to_string(ref_kind)) +
                                    " study; skipped for " + std::string(to_string(task)) + " pairs");
            }
            continue;
        }
        const int last = patient.last_visit_days();
        auto emit = [&](const Study& target) {
            const TimeBin bin = bin_timepoint(last - target.date_days);
            if (task == Task::Surveillance && bin == TimeBin::Excluded) return;
            for (const auto& r : ref->images) {
                for (const auto& t : target.images) {
                    ImagePair pair;
                    pair.ref_image = r.path;
                    pair.later_image = t.path;
                    pair.dt_norm = normalize_dt(target.date_days - ref->date_days);
                    pair.label = t.label.value_or(patient.outcome);
                    pair.task = task;
                    pair.patient_id = patient.patient_id;
                    pair.bin = bin;
                    pair.later_date_days = target.date_days;
                    pair.later_tags = t.tags;
                    pairs.push_back(std::move(pair));
                }
            }
        };
        if (task == Task::Surveillance) {
            for (const auto& study : patient.studies) {
                if (study.kind == StudyKind::FollowUp) emit(study);
            }
        } else if (const Study* restaging = patient.find(StudyKind::Restaging)) {
            emit(*restaging);
        } else if (warnings) {
            warnings->push_back("patient " + patient.patient_id + " has no restaging study; skipped for response pairs");
        }
    }
    return pairs;
}

std::vector<ImagePair> unique_later_images(const std::vector<ImagePair>& pairs)
{
    std::vector<ImagePair> out;
    std::set<std::string> seen;
    for (const auto& p : pairs) {
        if (seen.insert(p.later_image).second) out.push_back(p);
    }
    return out;
}

}  // namespace trex::data
