#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "m2iosr/config.hpp"
#include "m2iosr/datasets.hpp"
#include "m2iosr/model.hpp"

namespace m2iosr {

inline constexpr int kCheckpointFormatVersion = 1;

struct ManifestEntry {
    std::string name;
    std::string group;
    std::vector<std::int64_t> shape;
    std::string dtype; // "float32", "float64" or "int64"
    std::uint64_t offset = 0;
    std::uint64_t bytes = 0;
};

/// A checkpoint is `manifest.json` plus a raw little-endian parameter blob
/// (`params.bin`) in the same directory. Entries cover every parameter and
/// buffer in module registration order.
struct CheckpointManifest {
    int format_version = kCheckpointFormatVersion;
    std::string blob = "params.bin";
    std::vector<ManifestEntry> entries;
    RunConfig config;
    SplitSpec split;
    int epoch = 0;
    std::string rng_digest;
};

/// Concatenated tensor bytes and the entries that describe them.
std::vector<std::uint8_t> serialize_parameters(OsrModel& model, std::vector<ManifestEntry>& entries);

/// Copies blob data into the model. Throws CheckpointError naming the first
/// entry whose name, shape, or dtype does not match.
void deserialize_parameters(OsrModel& model, const std::vector<ManifestEntry>& entries,
                            const std::vector<std::uint8_t>& blob);

/// Writes manifest.json and the blob into `dir`; returns the manifest path.
std::filesystem::path save_checkpoint(OsrModel& model, CheckpointManifest manifest, const std::filesystem::path& dir);

struct LoadedCheckpoint {
    CheckpointManifest manifest;
    OsrModel model{nullptr};
};

/// `path` may name the manifest file or its directory.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

CheckpointManifest read_manifest(const std::filesystem::path& manifest_path);

} // namespace m2iosr
