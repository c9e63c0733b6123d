#pragma once

#include "trex/data/cohort.hpp"
#include "trex/data/image.hpp"

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

namespace trex::data {

inline constexpr std::string_view kManifestHeader = "patient_id,outcome,study_kind,date_days,image_path,artifact_tags";

class ManifestError : public std::runtime_error {
public:
    ManifestError(const std::string& file, std::size_t line, const std::string& what);
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Parses the cohort CSV (one row per image). Line numbers in errors are 1-based.
Cohort load_manifest(const std::filesystem::path& path);
Cohort parse_manifest(std::istream& in, const std::string& name = "<manifest>");
void write_manifest(const Cohort& cohort, const std::filesystem::path& path);
void write_manifest(const Cohort& cohort, std::ostream& out);

/// Decoded images keyed by manifest path, all at one working resolution.
class ImageStore {
public:
    void put(const std::string& key, Image image) { images_[key] = std::move(image); }
    const Image& get(const std::string& key) const;
    bool contains(const std::string& key) const { return images_.count(key) > 0; }
    std::size_t size() const { return images_.size(); }

    /// Reads every image referenced by the cohort (relative paths resolve
    /// against `base_dir`) and resizes to width x height.
    static ImageStore load(const Cohort& cohort, const std::filesystem::path& base_dir, std::size_t width,
                           std::size_t height);

private:
    std::map<std::string, Image> images_;
};

}  // namespace trex::data
