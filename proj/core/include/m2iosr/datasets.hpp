#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "m2iosr/labels.hpp"

namespace m2iosr {

struct ImageShape {
    int channels = 1;
    int height = 32;
    int width = 32;

    std::size_t pixels() const { return static_cast<std::size_t>(channels) * height * width; }
    bool operator==(const ImageShape&) const = default;
};

/// Dense NCHW float images with values in [0,1] and optional per-sample labels.
struct ImageBatch {
    ImageShape shape;
    std::vector<float> pixels;
    std::vector<int> labels; // empty, or one label per image

    ImageBatch() = default;
    ImageBatch(std::size_t count, ImageShape s);

    std::size_t size() const { return shape.pixels() == 0 ? 0 : pixels.size() / shape.pixels(); }
    bool labeled() const { return !labels.empty(); }
    std::span<float> image(std::size_t i);
    std::span<const float> image(std::size_t i) const;

    /// Copies the images at `indices` (in order) into a new batch.
    ImageBatch gather(std::span<const std::size_t> indices) const;
    /// Appends `other`, which must have the same shape and labeledness.
    void append(const ImageBatch& other);
};

enum class UnknownSourceKind { HeldOutClasses, External, SyntheticNoise, NoisedCopy };

enum class FitMode { Crop, Resize };

struct UnknownSource {
    UnknownSourceKind kind = UnknownSourceKind::HeldOutClasses;
    std::vector<int> classes;   // held-out class ids (HeldOutClasses)
    std::string dataset;        // directory of the external dataset (External)
    FitMode transform = FitMode::Resize; // External only
    std::size_t count = 0;      // synthetic sample count; 0 means "match the known test set"
};

/// A reproducible known/unknown partition of a dataset's classes.
struct SplitSpec {
    std::string dataset;
    std::vector<int> known_classes; // sorted
    UnknownSource unknown;
    std::uint64_t trial_seed = 0;

    int num_known() const { return static_cast<int>(known_classes.size()); }
    /// Throws ConfigError if known and held-out class ids overlap.
    void validate() const;
};

/// Picks `num_known` classes from `class_ids` through a seeded permutation.
/// The remaining classes become the held-out unknown pool.
SplitSpec make_split(const std::string& dataset, std::span<const int> class_ids, int num_known,
                     std::uint64_t trial_seed);

/// Stable digest of a split, used to show that runs shared one partition.
std::string split_hash(const SplitSpec& split);

std::string to_string(UnknownSourceKind kind);
UnknownSourceKind unknown_source_from_string(const std::string& name);
std::string to_string(FitMode mode);
FitMode fit_mode_from_string(const std::string& name);

/// `count` images of independent U[0,1] pixels, labeled unknown.
ImageBatch synth_noise(std::size_t count, ImageShape shape, std::uint64_t seed);

/// clamp(x + u, 0, 1) with u ~ U[0,1] per pixel; labeled unknown.
ImageBatch noised_copy(const ImageBatch& images, std::uint64_t seed);

/// Center-crops or bilinearly resizes every image to 32x32.
ImageBatch fit_to_32(const ImageBatch& images, FitMode mode);

/// Replicates single-channel images to `channels`; identity when they already match.
ImageBatch replicate_channels(const ImageBatch& images, int channels);

/// Keeps the images whose label is in `classes`, relabeled to their index in `classes`.
ImageBatch select_classes(const ImageBatch& images, std::span<const int> classes);

enum class DatasetPart { Train, Test };

/// Loads MNIST-style IDX archives (optionally gzipped): `train-images-idx3-ubyte`
/// and friends for the train part, `t10k-*` for the test part.
ImageBatch load_idx(const std::filesystem::path& dir, DatasetPart part);

/// Loads `dir/<class>/*.png`; class ids follow the sorted subdirectory names.
ImageBatch load_png_folder(const std::filesystem::path& dir, int channels);

/// IDX archives when present, otherwise `dir/train` or `dir/test` PNG folders,
/// otherwise `dir` itself as a PNG folder. Output is fitted to 32x32 with
/// `channels` channels.
ImageBatch load_dataset(const std::filesystem::path& dir, DatasetPart part, int channels,
                        FitMode fit = FitMode::Resize);

/// Sorted distinct labels of a labeled batch.
std::vector<int> class_ids(const ImageBatch& images);

/// Writes each image as `<dir>/<prefix><index>.png` (8-bit).
void save_png_folder(const ImageBatch& images, const std::filesystem::path& dir,
                     const std::string& prefix = "img_");

/// Keeps the first `max_per_class` images of every label, in order.
ImageBatch cap_per_class(const ImageBatch& images, std::size_t max_per_class);

/// Known test samples (labels 0..K-1) followed by the unknown samples the
/// split's unknown source describes (label kUnknownLabel). `test` carries the
/// dataset's original class ids.
ImageBatch build_open_test_set(const SplitSpec& split, const ImageBatch& test, int channels);

} // namespace m2iosr
