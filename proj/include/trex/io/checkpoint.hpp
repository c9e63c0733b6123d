#pragma once

#include "trex/model/model.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

namespace trex::io {

inline constexpr char kCheckpointMagic[8] = {'T', 'R', 'X', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class BadMagicError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};
class VersionError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};
class ChecksumError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};
class ConfigMismatchError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};
/// Truncated or structurally invalid body.
class FormatError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

struct CheckpointMeta {
    std::uint64_t seed = 0;
    std::uint64_t epoch = 0;
    std::uint32_t fold = 0;
};

struct LoadedCheckpoint {
    model::ModelConfig config;
    CheckpointMeta meta;
    std::unique_ptr<model::PairModel<float>> model;
};

/// Layout: magic, u32 version, u64 body size, body, u64 FNV-1a of the body.
/// Body: config echo (key=value text), seed, epoch, fold, then per tensor its
/// name, rank, dims and little-endian float32 values, in registration order.
std::string serialize_checkpoint(const model::PairModel<float>& model, const CheckpointMeta& meta);
LoadedCheckpoint deserialize_checkpoint(const std::string& bytes, const std::optional<model::ModelConfig>& expected = std::nullopt);

void save_checkpoint(const model::PairModel<float>& model, const CheckpointMeta& meta, const std::filesystem::path& path);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const std::optional<model::ModelConfig>& expected = std::nullopt);

std::uint64_t fnv1a64(const void* data, std::size_t size);

}  // namespace trex::io
