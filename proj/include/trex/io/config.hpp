#pragma once

#include "trex/data/synth.hpp"
#include "trex/eval/metrics.hpp"
#include "trex/train/fit.hpp"

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace trex::io {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct EvalConfig {
    std::size_t k = 3;
    eval::Aggregation aggregation = eval::Aggregation::Mean;
    double overlay_alpha = 0.5;
    bool operator==(const EvalConfig&) const = default;
};

/// Everything a run needs, in one flat `section.key=value` document.
struct RunConfig {
    std::uint64_t seed = 0;
    std::string encoder_preset = "toy";
    train::TrainConfig train;  // train.seed mirrors `seed`
    EvalConfig eval;
    data::SynthConfig synth;
    std::string data_dir = "data";
    std::string out_dir = "runs";

    void validate() const;
};

using Entries = std::vector<std::pair<std::string, std::string>>;

/// Every key with its current value, in a fixed order.
Entries config_entries(const RunConfig& cfg);
Entries model_config_entries(const model::ModelConfig& cfg);

/// Sets one key; unknown keys and malformed values throw ConfigError.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
void set_model_config_value(model::ModelConfig& cfg, const std::string& key, const std::string& value);

/// Parses `key=value` lines ('#' comments, blank lines allowed). A
/// `model.encoder` preset is applied before the explicit encoder.* keys.
RunConfig parse_config(std::istream& in, const std::string& name = "<config>");
RunConfig load_config(const std::filesystem::path& path);
model::ModelConfig parse_model_config(const Entries& entries);

void write_config(const RunConfig& cfg, std::ostream& out);
void write_config(const RunConfig& cfg, const std::filesystem::path& path);

}  // namespace trex::io
