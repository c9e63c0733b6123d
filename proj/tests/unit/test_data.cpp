#include "trex/data/cohort.hpp"
#include "trex/data/manifest.hpp"
#include "trex/data/sampling.hpp"
#include "trex/data/synth.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

using namespace trex::data;

namespace {

Study make_study(StudyKind kind, int day, const std::string& prefix, std::size_t n)
{
    Study s;
    s.kind = kind;
    s.date_days = day;
    for (std::size_t i = 0; i < n; ++i) s.images.push_back({prefix + "_" + std::to_string(i) + ".png", 0, {}});
    return s;
}

PatientRecord make_patient(const std::string& id, Outcome outcome, std::size_t restaging_images,
                           std::vector<std::pair<int, std::size_t>> followups, bool pre_tnt = false)
{
    PatientRecord p;
    p.patient_id = id;
    p.outcome = outcome;
    if (pre_tnt) p.studies.push_back(make_study(StudyKind::PreTnt, -180, id + "_pre", 1));
    p.studies.push_back(make_study(StudyKind::Restaging, 0, id + "_rs", restaging_images));
    for (auto [day, n] : followups) p.studies.push_back(make_study(StudyKind::FollowUp, day, id + "_fu" + std::to_string(day), n));
    return p;
}

Cohort balanced_cohort(std::size_t per_class)
{
    Cohort c;
    for (std::size_t i = 0; i < per_class; ++i) {
        c.patients.push_back(make_patient("C" + std::to_string(i), Outcome::CR, 1, {{90, 1}}));
        c.patients.push_back(make_patient("L" + std::to_string(i), Outcome::LR, 1, {{90, 1}}));
    }
    return c;
}

std::vector<ImagePair> labelled_pairs(std::size_t n_cr, std::size_t n_lr)
{
    std::vector<ImagePair> pairs;
    for (std::size_t i = 0; i < n_cr + n_lr; ++i) {
        ImagePair p;
        p.ref_image = "r" + std::to_string(i);
        p.later_image = "l" + std::to_string(i);
        p.label = i < n_cr ? Outcome::CR : Outcome::LR;
        p.patient_id = "P" + std::to_string(i);
        pairs.push_back(p);
    }
    return pairs;
}

SynthConfig small_synth(std::size_t patients)
{
    SynthConfig cfg;
    cfg.patients = patients;
    cfg.image_size = 32;
    cfg.max_followups = 4;
    return cfg;
}

}  // namespace

TEST_SUITE("cohort-data")
{
    TEST_CASE("empty manifest parses to an empty cohort")
    {
        std::istringstream in(std::string(kManifestHeader) + "\n");
        const Cohort c = parse_manifest(in);
        CHECK(c.patients.empty());
    }

    TEST_CASE("unknown study kind is reported with its token and line")
    {
        std::istringstream in(std::string(kManifestHeader) + "\nP1,LR,restaging,0,a.png,\nP1,LR,colonoscopy,90,b.png,\n");
        try {
            parse_manifest(in, "m.csv");
            FAIL("expected ManifestError");
        } catch (const ManifestError& e) {
            CHECK(std::string(e.what()).find("colonoscopy") != std::string::npos);
            CHECK(e.line() == 3);
        }
    }

    TEST_CASE("manifest errors: missing label, malformed row, duplicate image, missing file")
    {
        auto parse = [](const std::string& body) {
            std::istringstream in(std::string(kManifestHeader) + "\n" + body);
            return parse_manifest(in);
        };
        CHECK_THROWS_AS(parse("P1,,restaging,0,a.png,\n"), ManifestError);
        CHECK_THROWS_AS(parse("P1,LR,restaging,0\n"), ManifestError);
        CHECK_THROWS_AS(parse("P1,LR,restaging,0,a.png,\nP1,LR,follow_up,90,a.png,\n"), ManifestError);
        CHECK_THROWS_AS(parse("P1,LR,restaging,zero,a.png,\n"), ManifestError);
        CHECK_THROWS_AS(load_manifest("/nonexistent/manifest.csv"), ManifestError);
    }

    TEST_CASE("manifest write/load round trip on a synthetic cohort")
    {
        const auto synth = synth_cohort(small_synth(12), 5);
        const auto dir = std::filesystem::temp_directory_path() / "trex_manifest_rt";
        std::filesystem::create_directories(dir);
        write_manifest(synth.cohort, dir / "manifest.csv");
        const Cohort back = assign_retrospective_labels(load_manifest(dir / "manifest.csv"));
        CHECK(back == synth.cohort);

        std::ostringstream a, b;
        write_manifest(synth.cohort, a);
        write_manifest(back, b);
        CHECK(a.str() == b.str());
        std::filesystem::remove_all(dir);
    }

    TEST_CASE("artifact tag parsing")
    {
        CHECK(parse_artifact_tags("") == 0);
        CHECK(parse_artifact_tags("blood|stool") == (kBlood | kStool));
        CHECK(format_artifact_tags(kTelangiectasia | kPoorQuality) == "telangiectasia|poor_quality");
        CHECK_THROWS_AS(parse_artifact_tags("blood|glare"), std::invalid_argument);
    }

    TEST_CASE("retrospective labels: LR patient with tumour-free intermediate follow-up is LR")
    {
        Cohort c;
        c.patients.push_back(make_patient("L", Outcome::LR, 1, {{90, 2}, {180, 1}, {270, 3}}));
        c.patients.push_back(make_patient("C", Outcome::CR, 2, {{90, 1}, {180, 2}}));
        const Cohort labelled = assign_retrospective_labels(c);
        for (const auto& p : labelled.patients) {
            for (const auto& s : p.studies) {
                for (const auto& img : s.images) {
                    REQUIRE(img.label.has_value());
                    CHECK(*img.label == p.outcome);
                }
            }
        }
        CHECK(assign_retrospective_labels(labelled) == labelled);
    }

    TEST_CASE("pair counts are the product of study image counts")
    {
        Cohort c;
        c.patients.push_back(make_patient("A", Outcome::LR, 1, {{90, 3}}));
        c.patients.push_back(make_patient("B", Outcome::CR, 2, {{90, 3}}));
        const auto pairs = build_pairs(c, Task::Surveillance);
        std::size_t a = 0, b = 0;
        for (const auto& p : pairs) (p.patient_id == "A" ? a : b)++;
        CHECK(a == 3);
        CHECK(b == 6);

        for (const auto& p : pairs) {
            CHECK(p.ref_image.find("_rs_") != std::string::npos);
            CHECK(p.task == Task::Surveillance);
            CHECK(p.dt_norm == doctest::Approx(90.0 / 730.0));
        }
    }

    TEST_CASE("pair count property over synthetic cohorts")
    {
        const auto synth = synth_cohort(small_synth(20), 11);
        const auto pairs = build_pairs(synth.cohort, Task::Surveillance);
        std::size_t expected = 0;
        for (const auto& p : synth.cohort.patients) {
            const Study* rs = p.find(StudyKind::Restaging);
            REQUIRE(rs);
            for (const auto& s : p.studies) {
                if (s.kind != StudyKind::FollowUp) continue;
                if (bin_timepoint(p.last_visit_days() - s.date_days) == TimeBin::Excluded) continue;
                expected += rs->images.size() * s.images.size();
            }
        }
        CHECK(pairs.size() == expected);
        for (const auto& p : pairs) {
            CHECK(p.dt_norm >= 0.0);
            CHECK(p.dt_norm <= 1.0);
            CHECK(p.bin != TimeBin::Excluded);
        }
    }

    TEST_CASE("response pairs skip patients without pre-TNT and warn")
    {
        Cohort c;
        c.patients.push_back(make_patient("A", Outcome::LR, 2, {{90, 1}}, true));
        c.patients.push_back(make_patient("B", Outcome::CR, 2, {{90, 1}}, false));
        std::vector<std::string> warnings;
        const auto pairs = build_pairs(c, Task::Response, &warnings);
        CHECK(pairs.size() == 2);
        for (const auto& p : pairs) {
            CHECK(p.patient_id == "A");
            CHECK(p.task == Task::Response);
        }
        REQUIRE(warnings.size() == 1);
        CHECK(warnings[0].find("B") != std::string::npos);
    }

    TEST_CASE("normalize_dt examples")
    {
        CHECK(normalize_dt(0) == 0.0);
        CHECK(normalize_dt(730) == 1.0);
        CHECK(normalize_dt(365) == 0.5);
        CHECK(normalize_dt(900) == 1.0);
        CHECK_THROWS_AS(normalize_dt(-1), ContractViolation);
    }

    TEST_CASE("normalize_dt is monotone and saturates")
    {
        double prev = 0.0;
        for (int d = 0; d <= 2000; ++d) {
            const double v = normalize_dt(d);
            CHECK(v >= prev);
            CHECK(v <= 1.0);
            prev = v;
        }
        CHECK(normalize_dt(2000) == 1.0);
    }

    TEST_CASE("bin_timepoint examples")
    {
        CHECK(bin_timepoint(0) == TimeBin::M0);
        CHECK(bin_timepoint(120) == TimeBin::M3_6);
        CHECK(bin_timepoint(400) == TimeBin::M12_24);
        CHECK(bin_timepoint(1) == TimeBin::M3_6);
        CHECK_THROWS_AS(bin_timepoint(-5), ContractViolation);
    }

    TEST_CASE("bins partition the retained range")
    {
        for (int d = 0; d <= 1000; ++d) {
            const double months = d / 30.4375;
            TimeBin expected = TimeBin::Excluded;
            if (d == 0) expected = TimeBin::M0;
            else if (months <= 6) expected = TimeBin::M3_6;
            else if (months <= 12) expected = TimeBin::M6_12;
            else if (months <= 24) expected = TimeBin::M12_24;
            CHECK(bin_timepoint(d) == expected);
        }
    }

    TEST_CASE("stratified split: 10 CR + 10 LR over 5 folds gives 2 + 2 each")
    {
        const Cohort c = balanced_cohort(10);
        const auto folds = split_folds(c, 5, 42);
        for (std::size_t f = 0; f < 5; ++f) {
            std::size_t cr = 0, lr = 0;
            for (const auto& id : folds.patients_in(f)) (id[0] == 'C' ? cr : lr)++;
            CHECK(cr == 2);
            CHECK(lr == 2);
        }
    }

    TEST_CASE("split is deterministic, a partition, and balanced within one patient")
    {
        const auto synth = synth_cohort(small_synth(37), 3);
        const auto a = split_folds(synth.cohort, 5, 9);
        const auto b = split_folds(synth.cohort, 5, 9);
        CHECK(a.fold_of == b.fold_of);
        CHECK(a.fold_of.size() == synth.cohort.patients.size());

        std::set<std::string> seen;
        for (std::size_t f = 0; f < 5; ++f) {
            for (const auto& id : a.patients_in(f)) CHECK(seen.insert(id).second);
        }
        CHECK(seen.size() == synth.cohort.patients.size());

        for (Outcome o : {Outcome::CR, Outcome::LR}) {
            std::size_t lo = SIZE_MAX, hi = 0;
            for (std::size_t f = 0; f < 5; ++f) {
                std::size_t n = 0;
                for (const auto& p : synth.cohort.patients) n += p.outcome == o && a.fold_of.at(p.patient_id) == f;
                lo = std::min(lo, n);
                hi = std::max(hi, n);
            }
            CHECK(hi - lo <= 1);
        }
        CHECK_THROWS_AS(split_folds(balanced_cohort(3), 5, 1), std::invalid_argument);
    }

    TEST_CASE("no patient contributes to both sides of any fold")
    {
        const auto synth = synth_cohort(small_synth(30), 8);
        const auto pairs = build_pairs(synth.cohort, Task::Surveillance);
        const auto folds = split_folds(synth.cohort, 5, 1);
        for (std::size_t f = 0; f < 5; ++f) {
            const auto part = partition_pairs(pairs, folds, f);
            CHECK(part.train.size() + part.validation.size() == pairs.size());
            std::set<std::string> train_ids, val_ids;
            for (const auto& p : part.train) train_ids.insert(p.patient_id);
            for (const auto& p : part.validation) val_ids.insert(p.patient_id);
            for (const auto& id : val_ids) CHECK(train_ids.count(id) == 0);
        }
    }

    TEST_CASE("balanced batches of 8 hold 4 CR and 4 LR")
    {
        const auto pairs = labelled_pairs(40, 20);
        for (const auto& batch : balanced_batches(pairs, 8, 3)) {
            REQUIRE(batch.size() == 8);
            std::size_t lr = 0;
            for (auto i : batch) lr += pairs[i].label == Outcome::LR;
            CHECK(lr == 4);
        }
    }

    TEST_CASE("odd batches alternate the larger class share")
    {
        const auto pairs = labelled_pairs(30, 30);
        BatchStream stream(pairs, 5, true, 1, 6);
        std::set<std::size_t> shares;
        for (const auto& batch : stream.next_epoch()) {
            std::size_t lr = 0;
            for (auto i : batch) lr += pairs[i].label == Outcome::LR;
            CHECK((lr == 2 || lr == 3));
            shares.insert(lr);
        }
        CHECK(shares.size() == 2);
    }

    TEST_CASE("minority pairs repeat within an epoch of a 100:10 stream")
    {
        const auto pairs = labelled_pairs(100, 10);
        std::map<std::size_t, int> lr_counts;
        for (const auto& batch : balanced_batches(pairs, 8, 4)) {
            for (auto i : batch) {
                if (pairs[i].label == Outcome::LR) lr_counts[i]++;
            }
        }
        int max_count = 0;
        for (auto& [i, n] : lr_counts) max_count = std::max(max_count, n);
        CHECK(max_count > 1);
    }

    TEST_CASE("seeded batch streams are reproducible; single class rejected")
    {
        const auto pairs = labelled_pairs(20, 7);
        CHECK(balanced_batches(pairs, 8, 11) == balanced_batches(pairs, 8, 11));
        CHECK(balanced_batches(pairs, 8, 11) != balanced_batches(pairs, 8, 12));
        CHECK_THROWS_AS(balanced_batches(labelled_pairs(10, 0), 8, 1), std::invalid_argument);

        BatchStream plain(pairs, 8, false, 2);
        std::multiset<std::size_t> seen;
        for (const auto& b : plain.next_epoch()) seen.insert(b.begin(), b.end());
        CHECK(seen.size() == plain.batches_per_epoch() * 8);
        CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == pairs.size());
    }

    TEST_CASE("augment: identity, closure, and non-square rejection")
    {
        Image img(5, 5);
        std::mt19937_64 fill(3);
        for (auto& v : img.rgb) v = static_cast<std::uint8_t>(fill() & 0xff);

        CHECK(apply_d4(img, D4{0, false}) == img);
        const Image r1 = apply_d4(img, D4{1, false});
        CHECK(apply_d4(r1, D4{1, false}) == apply_d4(img, D4{2, false}));
        CHECK(apply_d4(apply_d4(img, D4{0, true}), D4{0, true}) == img);
        CHECK(r1 != img);

        for (int a = 0; a < 8; ++a) {
            for (int b = 0; b < 8; ++b) {
                const D4 ea = D4::from_index(a), eb = D4::from_index(b);
                CHECK(apply_d4(apply_d4(img, eb), ea) == apply_d4(img, ea * eb));
            }
        }

        // counter-clockwise quarter turn moves the top-right pixel to the top-left
        CHECK(std::equal(r1.px(0, 0), r1.px(0, 0) + 3, img.px(4, 0)));

        std::mt19937_64 rng(1);
        CHECK_THROWS_AS(augment(Image(4, 3), rng), std::invalid_argument);
    }

    TEST_CASE("augment samples D4 uniformly over 10^4 draws")
    {
        Image img(4, 4);
        std::mt19937_64 rng(2024);
        std::array<int, 8> counts{};
        const int n = 10000;
        for (int i = 0; i < n; ++i) {
            D4 e;
            augment(img, rng, &e);
            counts[e.index()]++;
        }
        const double p = 1.0 / 8.0;
        const double mean = n * p;
        const double sd = std::sqrt(n * p * (1 - p));
        for (int c : counts) CHECK(std::abs(c - mean) <= 3 * sd);
    }

    TEST_CASE("synth is byte-identical under a fixed seed")
    {
        const auto a = synth_cohort(small_synth(10), 7);
        const auto b = synth_cohort(small_synth(10), 7);
        CHECK(a.cohort == b.cohort);
        CHECK(a.images.size() == b.images.size());
        for (const auto& p : a.cohort.patients) {
            for (const auto& s : p.studies) {
                for (const auto& img : s.images) CHECK(a.images.get(img.path) == b.images.get(img.path));
            }
        }
        const auto c = synth_cohort(small_synth(10), 8);
        CHECK_FALSE(a.cohort == c.cohort);
    }

    TEST_CASE("synth LR fraction within 2% of the configured rate at n=500")
    {
        SynthConfig cfg = small_synth(500);
        cfg.image_size = 16;
        cfg.max_followups = 3;
        for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
            const auto s = synth_cohort(cfg, seed);
            const double frac = static_cast<double>(s.cohort.count(Outcome::LR)) / 500.0;
            CHECK(std::abs(frac - cfg.lr_rate) <= 0.02);
        }
    }

    TEST_CASE("every LR detection visit holds a lesion at or above the threshold")
    {
        const SynthConfig cfg = small_synth(40);
        const auto s = synth_cohort(cfg, 13);
        s.cohort.validate();
        std::size_t checked = 0;
        for (const auto& p : s.cohort.patients) {
            if (p.outcome != Outcome::LR) continue;
            const Study& last = p.studies.back();
            for (const auto& img : last.images) {
                const auto& truth = s.lesions.at(img.path);
                CHECK(truth.visits_before_detection == 0);
                CHECK(truth.radius_px >= cfg.detection_threshold);
                ++checked;
            }
            for (const auto& study : p.studies) {
                if (study.kind != StudyKind::FollowUp) continue;
                for (const auto& img : study.images) {
                    const auto it = s.lesions.find(img.path);
                    if (it == s.lesions.end()) continue;
                    if (it->second.visits_before_detection >= 1 && it->second.visits_before_detection <= 2) {
                        CHECK(it->second.radius_px <= 2.0);
                    }
                }
            }
        }
        CHECK(checked > 0);
    }

    TEST_CASE("synth config errors")
    {
        SynthConfig cfg;
        cfg.lr_rate = 1.5;
        CHECK_THROWS_AS(synth_cohort(cfg, 1), std::invalid_argument);
        cfg = SynthConfig{};
        cfg.patients = 0;
        CHECK_THROWS_AS(synth_cohort(cfg, 1), std::invalid_argument);
    }

    TEST_CASE("images survive a PNG and PPM round trip and resize")
    {
        Image img(6, 6);
        std::mt19937_64 rng(5);
        for (auto& v : img.rgb) v = static_cast<std::uint8_t>(rng() & 0xff);
        const auto dir = std::filesystem::temp_directory_path() / "trex_img_rt";
        std::filesystem::create_directories(dir);
        write_image(img, dir / "a.png");
        write_image(img, dir / "a.ppm");
        CHECK(read_image(dir / "a.png") == img);
        CHECK(read_image(dir / "a.ppm") == img);
        CHECK(resize_bilinear(img, 6, 6) == img);
        const Image big = resize_bilinear(img, 12, 12);
        CHECK(big.width == 12);
        CHECK_THROWS_AS(read_image(dir / "missing.png"), ImageIoError);
        std::filesystem::remove_all(dir);
    }
}
