#include "trex/data/synth.hpp"

#include "trex/util/seed.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>

namespace trex::data {

namespace {

using Rgb = std::array<double, 3>;
struct Vec2 {
    double x = 0, y = 0;
};

constexpr Rgb kScar{0.93, 0.84, 0.80};
constexpr Rgb kSpot{0.40, 0.15, 0.15};
constexpr Rgb kLesion{0.36, 0.10, 0.10};
constexpr Rgb kTumour{0.42, 0.12, 0.14};
constexpr Rgb kBloodColour{0.78, 0.05, 0.06};
constexpr Rgb kStoolColour{0.58, 0.44, 0.18};
constexpr Rgb kVessel{0.58, 0.12, 0.22};

double uniform(std::mt19937_64& rng, double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

bool chance(std::mt19937_64& rng, double p)
{
    return std::bernoulli_distribution(p)(rng);
}

// Anti-aliased coverage of a disc of radius r at distance d.
double disc_alpha(double d, double r)
{
    return std::clamp(r + 0.5 - d, 0.0, 1.0);
}

double segment_distance(Vec2 p, Vec2 a, Vec2 b)
{
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double len2 = vx * vx + vy * vy;
    const double t = len2 > 0 ? std::clamp(((p.x - a.x) * vx + (p.y - a.y) * vy) / len2, 0.0, 1.0) : 0.0;
    return std::hypot(p.x - (a.x + t * vx), p.y - (a.y + t * vy));
}

void blend(Rgb& c, const Rgb& target, double alpha)
{
    for (int i = 0; i < 3; ++i) c[i] += alpha * (target[i] - c[i]);
}

struct Wave {
    double kx, ky, phase, amp;
};

struct Disc {
    Vec2 center;
    double radius;
};

struct Segment {
    Vec2 a, b;
    double width;
};

struct PatientScene {
    Vec2 scar_pos;
    double scar_radius;
    std::vector<Disc> spots;
    std::optional<Disc> pigment;  // offset from the scar centre
    double pre_tnt_radius;
};

// Mucosa colour and texture follow exam lighting, so they vary per image.
struct ImageScene {
    Rgb mucosa;
    std::vector<Wave> texture;
    double angle, scale;
    Vec2 shift;
    double scar_radius = 0;
    double lesion_radius = 0;
    double tumour_radius = 0;
    std::vector<Segment> vessels;  // world frame
    std::vector<Segment> streaks;  // image frame
    std::vector<Disc> stool;       // image frame
    bool poor_quality = false;
    std::uint64_t noise_seed = 0;
};

Vec2 to_pixel(const ImageScene& v, Vec2 w, double centre)
{
    const double c = std::cos(v.angle), s = std::sin(v.angle);
    return {centre + v.shift.x + v.scale * (c * w.x - s * w.y), centre + v.shift.y + v.scale * (s * w.x + c * w.y)};
}

Vec2 to_world(const ImageScene& v, Vec2 p, double centre)
{
    const double dx = (p.x - centre - v.shift.x) / v.scale, dy = (p.y - centre - v.shift.y) / v.scale;
    const double c = std::cos(v.angle), s = std::sin(v.angle);
    return {c * dx + s * dy, -s * dx + c * dy};
}

Image render(const SynthConfig& cfg, const PatientScene& patient, const ImageScene& view)
{
    const std::size_t n = cfg.image_size;
    const double centre = (static_cast<double>(n) - 1.0) / 2.0;
    const double field = 0.47 * static_cast<double>(n);
    std::mt19937_64 noise_rng(view.noise_seed);
    std::normal_distribution<double> noise(0.0, 0.015);

    std::vector<Rgb> canvas(n * n);
    for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
            const Vec2 p{static_cast<double>(x), static_cast<double>(y)};
            const Vec2 w = to_world(view, p, centre);
            Rgb c = view.mucosa;
            double tex = 0;
            for (const auto& wave : view.texture) tex += wave.amp * std::sin(wave.kx * w.x + wave.ky * w.y + wave.phase);
            for (auto& ch : c) ch *= 1.0 + tex;

            const double scale = view.scale;
            for (const auto& seg : view.vessels) blend(c, kVessel, 0.8 * disc_alpha(segment_distance(w, seg.a, seg.b) * scale, seg.width));
            const double d_site = std::hypot(w.x - patient.scar_pos.x, w.y - patient.scar_pos.y) * scale;
            if (view.tumour_radius > 0) blend(c, kTumour, disc_alpha(d_site, view.tumour_radius * scale));
            if (view.scar_radius > 0) {
                blend(c, kScar, 0.85 * disc_alpha(d_site, view.scar_radius * scale));
                if (patient.pigment) {
                    const Vec2 q{w.x - patient.scar_pos.x - patient.pigment->center.x, w.y - patient.scar_pos.y - patient.pigment->center.y};
                    blend(c, kLesion, disc_alpha(std::hypot(q.x, q.y) * scale, patient.pigment->radius * scale));
                }
            }
            for (const auto& spot : patient.spots) {
                blend(c, kSpot, disc_alpha(std::hypot(w.x - spot.center.x, w.y - spot.center.y) * scale, spot.radius * scale));
            }
            if (view.lesion_radius > 0) blend(c, kLesion, disc_alpha(d_site, view.lesion_radius * scale));

            for (const auto& seg : view.streaks) blend(c, kBloodColour, 0.9 * disc_alpha(segment_distance(p, seg.a, seg.b), seg.width));
            for (const auto& blob : view.stool) blend(c, kStoolColour, disc_alpha(std::hypot(p.x - blob.center.x, p.y - blob.center.y), blob.radius));

            const double r = std::hypot(p.x - centre, p.y - centre);
            const double vignette = 1.0 - 0.3 * (r / field) * (r / field);
            const double inside = disc_alpha(r, field);
            for (auto& ch : c) ch = ch * vignette * inside;
            canvas[y * n + x] = c;
        }
    }

    if (view.poor_quality) {
        std::vector<Rgb> blurred(canvas.size());
        const int radius = 1;
        for (std::size_t y = 0; y < n; ++y) {
            for (std::size_t x = 0; x < n; ++x) {
                Rgb acc{0, 0, 0};
                int count = 0;
                for (int dy = -radius; dy <= radius; ++dy) {
                    for (int dx = -radius; dx <= radius; ++dx) {
                        const auto yy = static_cast<std::ptrdiff_t>(y) + dy, xx = static_cast<std::ptrdiff_t>(x) + dx;
                        if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(n) || xx >= static_cast<std::ptrdiff_t>(n)) continue;
                        const auto& s = canvas[static_cast<std::size_t>(yy) * n + static_cast<std::size_t>(xx)];
                        for (int i = 0; i < 3; ++i) acc[i] += s[i];
                        ++count;
                    }
                }
                for (int i = 0; i < 3; ++i) blurred[y * n + x][i] = 0.8 * acc[i] / count;
            }
        }
        canvas.swap(blurred);
    }

    Image image(n, n);
    for (std::size_t i = 0; i < canvas.size(); ++i) {
        for (int ch = 0; ch < 3; ++ch) {
            const double v = std::clamp(canvas[i][ch] + noise(noise_rng), 0.0, 1.0);
            image.rgb[i * 3 + ch] = static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
    }
    return image;
}

Vec2 random_point_in_disc(std::mt19937_64& rng, double radius)
{
    const double r = radius * std::sqrt(uniform(rng, 0.0, 1.0));
    const double a = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    return {r * std::cos(a), r * std::sin(a)};
}

PatientScene make_patient_scene(const SynthConfig& cfg, std::mt19937_64& rng, Outcome outcome)
{
    const double field = 0.47 * static_cast<double>(cfg.image_size);
    PatientScene s;
    s.scar_pos = random_point_in_disc(rng, 0.5 * field);
    s.scar_radius = uniform(rng, 4.0, 7.0);
    std::poisson_distribution<int> spots(cfg.natural_spot_rate);
    const int n_spots = spots(rng);
    for (int i = 0; i < n_spots; ++i) s.spots.push_back({random_point_in_disc(rng, 0.75 * field), uniform(rng, 1.0, 2.0)});
    if (chance(rng, cfg.scar_pigment_rate)) s.pigment = Disc{random_point_in_disc(rng, 1.0), uniform(rng, 1.0, 2.0)};
    s.pre_tnt_radius = uniform(rng, 7.0, 10.0) + (outcome == Outcome::LR ? cfg.pre_tnt_lr_boost : 0.0);
    return s;
}

ImageScene make_view(const SynthConfig& cfg, std::mt19937_64& rng, std::uint8_t& tags)
{
    const double n = static_cast<double>(cfg.image_size);
    const double field = 0.47 * n;
    ImageScene v;
    v.angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    v.scale = uniform(rng, 0.92, 1.08);
    v.shift = {uniform(rng, -cfg.view_shift_px, cfg.view_shift_px), uniform(rng, -cfg.view_shift_px, cfg.view_shift_px)};
    v.noise_seed = rng();
    v.mucosa = {uniform(rng, 0.78, 0.92), uniform(rng, 0.40, 0.52), uniform(rng, 0.40, 0.50)};
    for (int i = 0; i < 4; ++i) {
        const double wavelength = uniform(rng, 6.0, 20.0);
        const double dir = uniform(rng, 0.0, std::numbers::pi);
        const double k = 2.0 * std::numbers::pi / wavelength;
        v.texture.push_back({k * std::cos(dir), k * std::sin(dir), uniform(rng, 0.0, 6.3), uniform(rng, 0.02, 0.05)});
    }
    tags = 0;
    if (chance(rng, cfg.telangiectasia_rate)) {
        tags |= kTelangiectasia;
        const int count = std::uniform_int_distribution<int>(3, 6)(rng);
        for (int i = 0; i < count; ++i) {
            const Vec2 a = random_point_in_disc(rng, 0.8 * field);
            const double ang = uniform(rng, 0.0, 2.0 * std::numbers::pi), len = uniform(rng, 4.0, 10.0);
            v.vessels.push_back({a, {a.x + len * std::cos(ang), a.y + len * std::sin(ang)}, 0.6});
        }
    }
    if (chance(rng, cfg.blood_rate)) {
        tags |= kBlood;
        const int count = std::uniform_int_distribution<int>(1, 2)(rng);
        for (int i = 0; i < count; ++i) {
            const Vec2 a{uniform(rng, 0.15 * n, 0.85 * n), uniform(rng, 0.15 * n, 0.85 * n)};
            const double ang = uniform(rng, 0.0, 2.0 * std::numbers::pi), len = uniform(rng, 8.0, 20.0);
            v.streaks.push_back({a, {a.x + len * std::cos(ang), a.y + len * std::sin(ang)}, uniform(rng, 0.8, 1.6)});
        }
    }
    if (chance(rng, cfg.stool_rate)) {
        tags |= kStool;
        const int count = std::uniform_int_distribution<int>(1, 3)(rng);
        for (int i = 0; i < count; ++i) {
            v.stool.push_back({{uniform(rng, 0.15 * n, 0.85 * n), uniform(rng, 0.15 * n, 0.85 * n)}, uniform(rng, 3.0, 6.0)});
        }
    }
    if (chance(rng, cfg.poor_quality_rate)) {
        tags |= kPoorQuality;
        v.poor_quality = true;
    }
    return v;
}

std::string image_name(std::size_t patient, const char* study, std::size_t index)
{
    std::ostringstream os;
    os << "images/P" << std::setw(4) << std::setfill('0') << patient << '_' << study << "_i" << index << ".ppm";
    return os.str();
}

}  // namespace

void SynthConfig::validate() const
{
    auto rate = [](double r, const char* name) {
        if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument(std::string("synth: ") + name + " must lie in [0,1]");
    };
    rate(lr_rate, "lr_rate");
    rate(blood_rate, "blood_rate");
    rate(stool_rate, "stool_rate");
    rate(telangiectasia_rate, "telangiectasia_rate");
    rate(poor_quality_rate, "poor_quality_rate");
    rate(scar_pigment_rate, "scar_pigment_rate");
    if (natural_spot_rate < 0) throw std::invalid_argument("synth: natural_spot_rate must be non-negative");
    if (patients == 0) throw std::invalid_argument("synth: patients must be positive");
    if (image_size < 16) throw std::invalid_argument("synth: image_size must be at least 16");
    if (min_followups == 0 || min_followups > max_followups) throw std::invalid_argument("synth: bad follow-up range");
    if (min_images == 0 || min_images > max_images || restaging_images == 0) {
        throw std::invalid_argument("synth: bad images-per-study range");
    }
    if (min_detection_images == 0 || min_detection_images > max_detection_images) {
        throw std::invalid_argument("synth: bad detection images range");
    }
    if (min_onset_visits > max_onset_visits || max_onset_visits > 3) {
        throw std::invalid_argument("synth: onset visits must satisfy min <= max <= 3");
    }
    if (detection_radius_min < detection_threshold || detection_radius_min > detection_radius_max) {
        throw std::invalid_argument("synth: detection radius range must lie above the detection threshold");
    }
    for (double r : subthreshold_radius) {
        if (r < 0 || r > 2.0) throw std::invalid_argument("synth: sub-threshold radii must lie in [0,2] px");
    }
    if (visit_interval_days <= visit_jitter_days) throw std::invalid_argument("synth: visit jitter must be below the interval");
    if (pre_tnt_days >= 0) throw std::invalid_argument("synth: pre_tnt_days must be negative");
}

SynthCohort synth_cohort(const SynthConfig& cfg, std::uint64_t seed)
{
    cfg.validate();
    SynthCohort out;
    const double centre = (static_cast<double>(cfg.image_size) - 1.0) / 2.0;
    // Exactly round(patients * lr_rate) LR patients, placed by a seeded shuffle.
    std::vector<Outcome> outcomes(cfg.patients, Outcome::CR);
    const auto n_lr = static_cast<std::size_t>(std::llround(static_cast<double>(cfg.patients) * cfg.lr_rate));
    std::fill_n(outcomes.begin(), n_lr, Outcome::LR);
    {
        std::mt19937_64 rng(derive_seed(seed, {0x6f7574636f6d65ULL}));
        std::shuffle(outcomes.begin(), outcomes.end(), rng);
    }
    for (std::size_t pi = 0; pi < cfg.patients; ++pi) {
        std::mt19937_64 rng(derive_seed(seed, {pi}));
        PatientRecord patient;
        std::ostringstream id;
        id << 'P' << std::setw(4) << std::setfill('0') << pi;
        patient.patient_id = id.str();
        patient.outcome = outcomes[pi];
        const bool lr = patient.outcome == Outcome::LR;
        const PatientScene scene = make_patient_scene(cfg, rng, patient.outcome);
        const auto n_fu = static_cast<std::size_t>(std::uniform_int_distribution<std::size_t>(cfg.min_followups, cfg.max_followups)(rng));
        const auto onset = static_cast<int>(std::uniform_int_distribution<std::size_t>(cfg.min_onset_visits, cfg.max_onset_visits)(rng));
        const double detection_radius = uniform(rng, cfg.detection_radius_min, cfg.detection_radius_max);
        if (lr) out.onset_visits[patient.patient_id] = onset;

        auto add_study = [&](StudyKind kind, int date, std::size_t images, const char* label, int visit_index) {
            Study study{kind, date, {}};
            for (std::size_t k = 0; k < images; ++k) {
                std::uint8_t tags = 0;
                ImageScene view = make_view(cfg, rng, tags);
                LesionTruth truth;
                if (kind == StudyKind::PreTnt) {
                    view.tumour_radius = scene.pre_tnt_radius;
                } else {
                    view.scar_radius = std::max(1.5, scene.scar_radius * std::pow(0.93, visit_index));
                }
                if (lr && kind == StudyKind::FollowUp) {
                    const int before = static_cast<int>(n_fu) - visit_index;
                    truth.visits_before_detection = before;
                    // radii are specified in pixels, independent of the view zoom
                    if (before == 0) {
                        view.lesion_radius = detection_radius / view.scale;
                    } else if (before <= onset) {
                        view.lesion_radius = cfg.subthreshold_radius[before - 1] / view.scale;
                    }
                }
                const std::string path = image_name(pi, label, k);
                out.images.put(path, render(cfg, scene, view));
                if (lr && kind == StudyKind::FollowUp) {
                    const Vec2 c = to_pixel(view, scene.scar_pos, centre);
                    const double r = view.lesion_radius * view.scale;
                    truth.radius_px = r;
                    truth.x0 = c.x - r;
                    truth.y0 = c.y - r;
                    truth.x1 = c.x + r;
                    truth.y1 = c.y + r;
                    out.lesions[path] = truth;
                }
                study.images.push_back(ImageRef{path, tags, std::nullopt});
            }
            patient.studies.push_back(std::move(study));
        };

        if (cfg.include_pre_tnt) add_study(StudyKind::PreTnt, cfg.pre_tnt_days, cfg.restaging_images, "pre", 0);
        add_study(StudyKind::Restaging, 0, cfg.restaging_images, "res", 0);
        std::uniform_int_distribution<int> jitter(-cfg.visit_jitter_days, cfg.visit_jitter_days);
        std::uniform_int_distribution<std::size_t> images(cfg.min_images, cfg.max_images);
        std::uniform_int_distribution<std::size_t> detection_images(cfg.min_detection_images, cfg.max_detection_images);
        for (std::size_t v = 1; v <= n_fu; ++v) {
            const int date = static_cast<int>(v) * cfg.visit_interval_days + jitter(rng);
            char label[16];
            std::snprintf(label, sizeof label, "fu%02zu", v);
            const bool detection = lr && v == n_fu;
            const std::size_t count = detection ? detection_images(rng) : images(rng);
            add_study(StudyKind::FollowUp, date, count, label, static_cast<int>(v));
        }
        out.cohort.patients.push_back(std::move(patient));
    }
    out.cohort = assign_retrospective_labels(std::move(out.cohort));
    out.cohort.validate();
    return out;
}

void write_synth_cohort(const SynthCohort& synth, const std::filesystem::path& out_dir)
{
    std::filesystem::create_directories(out_dir / "images");
    for (const auto& p : synth.cohort.patients) {
        for (const auto& s : p.studies) {
            for (const auto& img : s.images) write_ppm(synth.images.get(img.path), out_dir / img.path);
        }
    }
    write_manifest(synth.cohort, out_dir / "manifest.csv");
    std::ofstream lesions(out_dir / "lesions.csv");
    lesions << "image_path,visits_before_detection,radius_px,x0,y0,x1,y1\n";
    lesions << std::fixed << std::setprecision(3);
    for (const auto& [path, t] : synth.lesions) {
        lesions << path << ',' << t.visits_before_detection << ',' << t.radius_px << ',' << t.x0 << ',' << t.y0 << ','
                << t.x1 << ',' << t.y1 << '\n';
    }
    if (!lesions) throw std::runtime_error("cannot write lesions.csv in " + out_dir.string());
}

}  // namespace trex::data
