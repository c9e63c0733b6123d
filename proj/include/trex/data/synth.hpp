#pragma once

#include "trex/data/manifest.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace trex::data {

/// Procedural longitudinal cohort: a textured mucosa field seen through a
/// circular endoscope view, a pale post-treatment scar, and for LR patients a
/// dark lesion regrowing at the scar site.
struct SynthConfig {
    std::size_t patients = 200;
    double lr_rate = 0.35;
    std::size_t image_size = 64;

    int visit_interval_days = 90;
    int visit_jitter_days = 10;
    std::size_t min_followups = 3;
    std::size_t max_followups = 8;
    std::size_t restaging_images = 2;
    std::size_t min_images = 1;  // per follow-up study
    std::size_t max_images = 3;
    // The detection visit of an LR patient documents the lesion more heavily.
    std::size_t min_detection_images = 4;
    std::size_t max_detection_images = 6;
    bool include_pre_tnt = true;
    int pre_tnt_days = -180;

    // Lesion radius (px) at the detection visit, and the guaranteed minimum.
    double detection_radius_min = 4.0;
    double detection_radius_max = 7.0;
    double detection_threshold = 4.0;
    // Radii 1, 2, 3 visits before detection; each <= 2 px (sub-threshold).
    double subthreshold_radius[3] = {2.0, 2.0, 1.5};
    // The lesion first appears this many visits before detection.
    std::size_t min_onset_visits = 2;
    std::size_t max_onset_visits = 3;

    // Persistent dark mucosal spots per patient (Poisson mean).
    double natural_spot_rate = 1.0;
    // Fraction of patients whose scar carries a persistent dark dot from
    // restaging onwards, radius drawn from [1, 2] px.
    double scar_pigment_rate = 0.5;
    double blood_rate = 0.08;
    double stool_rate = 0.08;
    double telangiectasia_rate = 0.10;
    double poor_quality_rate = 0.08;
    // Extra pre-TNT tumour radius for LR patients (response-task signal).
    double pre_tnt_lr_boost = 2.0;

    double view_shift_px = 4.0;

    void validate() const;
};

struct LesionTruth {
    double radius_px = 0.0;  // 0 when absent
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    int visits_before_detection = -1;
};

struct SynthCohort {
    Cohort cohort;  // retrospective labels assigned
    ImageStore images;
    std::map<std::string, LesionTruth> lesions;  // LR follow-up images
    std::map<std::string, int> onset_visits;     // LR patients
};

SynthCohort synth_cohort(const SynthConfig& cfg, std::uint64_t seed);

/// Writes images/, manifest.csv and lesions.csv under `out_dir`.
void write_synth_cohort(const SynthCohort& synth, const std::filesystem::path& out_dir);

}  // namespace trex::data
