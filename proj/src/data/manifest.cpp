#include "trex/data/manifest.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

namespace trex::data {

ManifestError::ManifestError(const std::string& file, std::size_t line, const std::string& what)
    : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), line_(line)
{
}

namespace {

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

}  // namespace

Cohort parse_manifest(std::istream& in, const std::string& name)
{
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ManifestError(name, 1, "missing header");
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kManifestHeader) {
        throw ManifestError(name, line_no, "expected header '" + std::string(kManifestHeader) + "'");
    }

    std::vector<std::string> order;
    std::map<std::string, PatientRecord> patients;
    std::map<std::string, std::size_t> image_lines;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_csv(line);
        if (fields.size() != 6) {
            throw ManifestError(name, line_no, "expected 6 fields, got " + std::to_string(fields.size()));
        }
        const auto& [id, outcome_text, kind_text, date_text, path, tags_text] =
            std::tie(fields[0], fields[1], fields[2], fields[3], fields[4], fields[5]);
        if (id.empty()) throw ManifestError(name, line_no, "empty patient_id");
        if (outcome_text.empty()) throw ManifestError(name, line_no, "missing outcome label for patient " + id);
        const auto outcome = parse_outcome(outcome_text);
        if (!outcome) throw ManifestError(name, line_no, "unknown outcome '" + outcome_text + "'");
        const auto kind = parse_study_kind(kind_text);
        if (!kind) throw ManifestError(name, line_no, "unknown study kind '" + kind_text + "'");
        int date = 0;
        const auto [end, ec] = std::from_chars(date_text.data(), date_text.data() + date_text.size(), date);
        if (ec != std::errc{} || end != date_text.data() + date_text.size()) {
            throw ManifestError(name, line_no, "bad date_days '" + date_text + "'");
        }
        if (path.empty()) throw ManifestError(name, line_no, "empty image_path");
        std::uint8_t tags = 0;
        try {
            tags = parse_artifact_tags(tags_text);
        } catch (const std::invalid_argument& e) {
            throw ManifestError(name, line_no, e.what());
        }
        if (auto [it, fresh] = image_lines.emplace(path, line_no); !fresh) {
            throw ManifestError(name, line_no,
                                "duplicate image id '" + path + "' (first on line " + std::to_string(it->second) + ")");
        }

        auto [pit, created] = patients.try_emplace(id);
        PatientRecord& patient = pit->second;
        if (created) {
            patient.patient_id = id;
            patient.outcome = *outcome;
            order.push_back(id);
        } else if (patient.outcome != *outcome) {
            throw ManifestError(name, line_no, "conflicting outcome for patient " + id);
        }
        auto study = std::find_if(patient.studies.begin(), patient.studies.end(),
                                  [&](const Study& s) { return s.kind == *kind && s.date_days == date; });
        if (study == patient.studies.end()) {
            patient.studies.push_back(Study{*kind, date, {}});
            study = patient.studies.end() - 1;
        }
        study->images.push_back(ImageRef{path, tags, std::nullopt});
    }

    Cohort cohort;
    for (const auto& id : order) {
        auto patient = std::move(patients[id]);
        std::stable_sort(patient.studies.begin(), patient.studies.end(),
                         [](const Study& a, const Study& b) { return a.date_days < b.date_days; });
        cohort.patients.push_back(std::move(patient));
    }
    try {
        cohort.validate();
    } catch (const std::invalid_argument& e) {
        throw ManifestError(name, line_no, e.what());
    }
    return cohort;
}

Cohort load_manifest(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ManifestError(path.string(), 0, "cannot open manifest");
    return parse_manifest(in, path.string());
}

void write_manifest(const Cohort& cohort, std::ostream& out)
{
    out << kManifestHeader << '\n';
    for (const auto& p : cohort.patients) {
        for (const auto& s : p.studies) {
            for (const auto& img : s.images) {
                out << p.patient_id << ',' << to_string(p.outcome) << ',' << to_string(s.kind) << ',' << s.date_days
                    << ',' << img.path << ',' << format_artifact_tags(img.tags) << '\n';
            }
        }
    }
}

void write_manifest(const Cohort& cohort, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest " + path.string());
    write_manifest(cohort, out);
}

const Image& ImageStore::get(const std::string& key) const
{
    auto it = images_.find(key);
    if (it == images_.end()) throw std::out_of_range("image not loaded: " + key);
    return it->second;
}

ImageStore ImageStore::load(const Cohort& cohort, const std::filesystem::path& base_dir, std::size_t width,
                            std::size_t height)
{
    ImageStore store;
    for (const auto& p : cohort.patients) {
        for (const auto& s : p.studies) {
            for (const auto& img : s.images) {
                std::filesystem::path file(img.path);
                if (file.is_relative()) file = base_dir / file;
                store.put(img.path, resize_bilinear(read_image(file), width, height));
            }
        }
    }
    return store;
}

}  // namespace trex::data
