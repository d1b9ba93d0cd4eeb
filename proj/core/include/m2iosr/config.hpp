#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "m2iosr/datasets.hpp"
#include "m2iosr/encoder.hpp"
#include "m2iosr/trainer.hpp"

namespace m2iosr {

struct SplitConfig {
    std::string dataset = "mnist5k";
    int num_known = 6;
    std::uint64_t trial_seed = 0;
    UnknownSourceKind unknown_source = UnknownSourceKind::HeldOutClasses;
    std::string external_dataset; // directory, for unknown_source = external
    FitMode transform = FitMode::Resize;
    std::size_t unknown_count = 0; // synthetic sets; 0 = size of the known test set
    std::size_t max_train_per_class = 1000;
};

struct EvalConfig {
    double tau = 0.95;
    std::vector<int> sweep_pools{10, 14, 19, 25, 32, 42, 54, 71, 100};
};

struct PathsConfig {
    std::string data_dir = "data/mnist5k";
    std::string out_dir = "runs/default";
};

/// Everything needed to reproduce a run. The JSON form has the sections
/// `encoder`, `train`, `split`, `eval`, `paths` plus a top-level `baseline`;
/// unknown keys are rejected.
struct RunConfig {
    EncoderConfig encoder;
    TrainConfig train;
    std::string baseline = "VII-full";
    int checkpoint_every = 0; // epochs between checkpoints; 0 = final only
    SplitConfig split;
    EvalConfig eval;
    PathsConfig paths;

    void validate() const;
};

inline constexpr const char* kDataDirEnv = "M2IOSR_DATA_DIR";

/// Parses JSON text; missing keys keep their defaults. Throws ConfigError
/// listing every unknown key.
RunConfig parse_run_config(const std::string& json_text);
/// Reads a config file and applies the M2IOSR_DATA_DIR override.
RunConfig load_run_config(const std::filesystem::path& path);
/// Pretty-printed JSON with every field spelled out.
std::string to_json(const RunConfig& config);

std::string to_json(const SplitSpec& split);
SplitSpec parse_split_spec(const std::string& json_text);
SplitSpec load_split_spec(const std::filesystem::path& path);

/// The SplitSpec a config resolves to, given the dataset's class ids.
SplitSpec resolve_split(const RunConfig& config, const std::vector<int>& dataset_classes);

/// Reads a whole text file; throws DataError when it cannot be opened.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

} // namespace m2iosr
