#include "m2iosr/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <zlib.h>

#include "m2iosr/errors.hpp"

namespace fs = std::filesystem;

namespace m2iosr {

ImageBatch::ImageBatch(std::size_t count, ImageShape s) : shape(s), pixels(count * s.pixels(), 0.0f) {}

std::span<float> ImageBatch::image(std::size_t i) {
    return std::span<float>(pixels).subspan(i * shape.pixels(), shape.pixels());
}

std::span<const float> ImageBatch::image(std::size_t i) const {
    return std::span<const float>(pixels).subspan(i * shape.pixels(), shape.pixels());
}

ImageBatch ImageBatch::gather(std::span<const std::size_t> indices) const {
    ImageBatch out(indices.size(), shape);
    for (std::size_t j = 0; j < indices.size(); ++j) {
        auto src = image(indices[j]);
        std::copy(src.begin(), src.end(), out.image(j).begin());
        if (labeled()) {
            out.labels.push_back(labels[indices[j]]);
        }
    }
    return out;
}

void ImageBatch::append(const ImageBatch& other) {
    if (other.size() == 0) {
        return;
    }
    if (size() == 0) {
        *this = other;
        return;
    }
    if (!(other.shape == shape) || other.labeled() != labeled()) {
        throw ConfigError("cannot append batches with different shapes or labeling");
    }
    pixels.insert(pixels.end(), other.pixels.begin(), other.pixels.end());
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
}

void SplitSpec::validate() const {
    if (!std::is_sorted(known_classes.begin(), known_classes.end())) {
        throw ConfigError("split known_classes must be sorted");
    }
    for (int c : unknown.classes) {
        if (std::binary_search(known_classes.begin(), known_classes.end(), c)) {
            throw ConfigError("class " + std::to_string(c) + " is both known and unknown");
        }
    }
}

SplitSpec make_split(const std::string& dataset, std::span<const int> class_ids, int num_known,
                     std::uint64_t trial_seed) {
    if (num_known < 2 || static_cast<std::size_t>(num_known) >= class_ids.size()) {
        throw ConfigError("num_known must be in [2, total classes); got " + std::to_string(num_known) +
                          " of " + std::to_string(class_ids.size()));
    }
    std::vector<int> ids(class_ids.begin(), class_ids.end());
    std::sort(ids.begin(), ids.end());
    std::mt19937_64 rng(trial_seed);
    std::shuffle(ids.begin(), ids.end(), rng);

    SplitSpec split;
    split.dataset = dataset;
    split.trial_seed = trial_seed;
    split.known_classes.assign(ids.begin(), ids.begin() + num_known);
    split.unknown.kind = UnknownSourceKind::HeldOutClasses;
    split.unknown.classes.assign(ids.begin() + num_known, ids.end());
    std::sort(split.known_classes.begin(), split.known_classes.end());
    std::sort(split.unknown.classes.begin(), split.unknown.classes.end());
    return split;
}

std::string split_hash(const SplitSpec& split) {
    std::ostringstream canon;
    canon << split.dataset << '|' << split.trial_seed << '|';
    for (int c : split.known_classes) canon << c << ',';
    canon << '|' << to_string(split.unknown.kind) << '|';
    for (int c : split.unknown.classes) canon << c << ',';
    canon << '|' << split.unknown.dataset << '|' << to_string(split.unknown.transform) << '|'
          << split.unknown.count;

    // FNV-1a, 64 bit
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : canon.str()) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string to_string(UnknownSourceKind kind) {
    switch (kind) {
    case UnknownSourceKind::HeldOutClasses: return "held-out-classes";
    case UnknownSourceKind::External: return "external";
    case UnknownSourceKind::SyntheticNoise: return "synthetic-noise";
    case UnknownSourceKind::NoisedCopy: return "noised-copy";
    }
    return "?";
}

UnknownSourceKind unknown_source_from_string(const std::string& name) {
    for (auto k : {UnknownSourceKind::HeldOutClasses, UnknownSourceKind::External,
                   UnknownSourceKind::SyntheticNoise, UnknownSourceKind::NoisedCopy}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown unknown_source kind '" + name + "'");
}

std::string to_string(FitMode mode) { return mode == FitMode::Crop ? "crop" : "resize"; }

FitMode fit_mode_from_string(const std::string& name) {
    if (name == "crop") return FitMode::Crop;
    if (name == "resize") return FitMode::Resize;
    throw ConfigError("fit mode must be crop or resize, got '" + name + "'");
}

ImageBatch synth_noise(std::size_t count, ImageShape shape, std::uint64_t seed) {
    ImageBatch out(count, shape);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (auto& p : out.pixels) p = u(rng);
    out.labels.assign(count, kUnknownLabel);
    return out;
}

ImageBatch noised_copy(const ImageBatch& images, std::uint64_t seed) {
    ImageBatch out = images;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (auto& p : out.pixels) p = std::clamp(p + u(rng), 0.0f, 1.0f);
    out.labels.assign(out.size(), kUnknownLabel);
    return out;
}

namespace {

constexpr int kSide = 32;

void resize_plane(std::span<const float> src, int in_h, int in_w, std::span<float> dst, int out_h, int out_w) {
    const cv::Mat in(in_h, in_w, CV_32FC1, const_cast<float*>(src.data()));
    cv::Mat out(out_h, out_w, CV_32FC1, dst.data());
    cv::resize(in, out, out.size(), 0, 0, cv::INTER_LINEAR);
    for (float& v : dst) v = std::clamp(v, 0.0f, 1.0f);
}

} // namespace

ImageBatch fit_to_32(const ImageBatch& images, FitMode mode) {
    const auto& in = images.shape;
    if (in.height == kSide && in.width == kSide) {
        return images;
    }
    ImageShape out_shape{in.channels, kSide, kSide};
    ImageBatch out(images.size(), out_shape);
    out.labels = images.labels;
    const std::size_t in_plane = static_cast<std::size_t>(in.height) * in.width;
    const std::size_t out_plane = kSide * kSide;

    if (mode == FitMode::Crop) {
        if (in.height < kSide || in.width < kSide) {
            throw ConfigError("crop needs images of at least 32x32, got " + std::to_string(in.height) + "x" +
                              std::to_string(in.width));
        }
        const int top = (in.height - kSide) / 2;
        const int left = (in.width - kSide) / 2;
        for (std::size_t i = 0; i < images.size(); ++i) {
            auto src = images.image(i);
            auto dst = out.image(i);
            for (int c = 0; c < in.channels; ++c) {
                for (int y = 0; y < kSide; ++y) {
                    auto row = src.subspan(c * in_plane + (top + y) * in.width + left, kSide);
                    std::copy(row.begin(), row.end(), dst.begin() + c * out_plane + y * kSide);
                }
            }
        }
        return out;
    }

    for (std::size_t i = 0; i < images.size(); ++i) {
        auto src = images.image(i);
        auto dst = out.image(i);
        for (int c = 0; c < in.channels; ++c) {
            resize_plane(src.subspan(c * in_plane, in_plane), in.height, in.width,
                         dst.subspan(c * out_plane, out_plane), kSide, kSide);
        }
    }
    return out;
}

ImageBatch replicate_channels(const ImageBatch& images, int channels) {
    if (images.shape.channels == channels) {
        return images;
    }
    if (images.shape.channels != 1) {
        throw ConfigError("cannot map " + std::to_string(images.shape.channels) + " channels to " +
                          std::to_string(channels));
    }
    ImageShape s{channels, images.shape.height, images.shape.width};
    ImageBatch out(images.size(), s);
    out.labels = images.labels;
    const std::size_t plane = images.shape.pixels();
    for (std::size_t i = 0; i < images.size(); ++i) {
        auto src = images.image(i);
        auto dst = out.image(i);
        for (int c = 0; c < channels; ++c) {
            std::copy(src.begin(), src.end(), dst.begin() + c * plane);
        }
    }
    return out;
}

ImageBatch select_classes(const ImageBatch& images, std::span<const int> classes) {
    if (!images.labeled()) {
        throw ConfigError("select_classes needs a labeled batch");
    }
    std::vector<std::size_t> keep;
    std::vector<int> new_labels;
    for (std::size_t i = 0; i < images.size(); ++i) {
        auto it = std::find(classes.begin(), classes.end(), images.labels[i]);
        if (it != classes.end()) {
            keep.push_back(i);
            new_labels.push_back(static_cast<int>(it - classes.begin()));
        }
    }
    ImageBatch out = images.gather(keep);
    out.labels = std::move(new_labels);
    return out;
}

std::vector<int> class_ids(const ImageBatch& images) {
    std::vector<int> ids = images.labels;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

namespace {

std::vector<unsigned char> read_gz_or_plain(const fs::path& base) {
    fs::path path = base;
    path += ".gz";
    if (!fs::exists(path)) {
        path = base;
    }
    if (!fs::exists(path)) {
        throw DataError("missing data file " + base.string() + "[.gz]");
    }
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) {
        throw DataError("cannot open " + path.string());
    }
    std::vector<unsigned char> data;
    std::array<unsigned char, 1 << 16> buf;
    int n = 0;
    while ((n = gzread(f, buf.data(), static_cast<unsigned>(buf.size()))) > 0) {
        data.insert(data.end(), buf.begin(), buf.begin() + n);
    }
    gzclose(f);
    if (n < 0) {
        throw DataError("read error in " + path.string());
    }
    return data;
}

std::uint32_t be32(const std::vector<unsigned char>& d, std::size_t off) {
    return (std::uint32_t(d[off]) << 24) | (std::uint32_t(d[off + 1]) << 16) | (std::uint32_t(d[off + 2]) << 8) |
           std::uint32_t(d[off + 3]);
}

bool has_idx(const fs::path& dir, const std::string& prefix) {
    auto p = dir / (prefix + "-images-idx3-ubyte");
    return fs::exists(p) || fs::exists(fs::path(p.string() + ".gz"));
}

} // namespace

ImageBatch load_idx(const fs::path& dir, DatasetPart part) {
    const std::string prefix = part == DatasetPart::Train ? "train" : "t10k";
    auto images = read_gz_or_plain(dir / (prefix + "-images-idx3-ubyte"));
    auto labels = read_gz_or_plain(dir / (prefix + "-labels-idx1-ubyte"));
    if (images.size() < 16 || be32(images, 0) != 0x00000803) {
        throw DataError("bad IDX image header in " + dir.string());
    }
    if (labels.size() < 8 || be32(labels, 0) != 0x00000801) {
        throw DataError("bad IDX label header in " + dir.string());
    }
    const std::size_t n = be32(images, 4);
    const int h = static_cast<int>(be32(images, 8));
    const int w = static_cast<int>(be32(images, 12));
    if (be32(labels, 4) != n || images.size() != 16 + n * h * w || labels.size() != 8 + n) {
        throw DataError("IDX size mismatch in " + dir.string());
    }
    ImageBatch out(n, ImageShape{1, h, w});
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
        out.pixels[i] = images[16 + i] / 255.0f;
    }
    out.labels.assign(labels.begin() + 8, labels.end());
    return out;
}

ImageBatch load_png_folder(const fs::path& dir, int channels) {
    if (!fs::is_directory(dir)) {
        throw DataError("missing data directory " + dir.string());
    }
    std::vector<fs::path> class_dirs;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_directory()) class_dirs.push_back(e.path());
    }
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty()) {
        throw DataError("no class subdirectories under " + dir.string());
    }

    ImageBatch out;
    for (std::size_t cls = 0; cls < class_dirs.size(); ++cls) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(class_dirs[cls])) {
            if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& file : files) {
            cv::Mat img = cv::imread(file.string(), channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
            if (img.empty()) {
                throw DataError("cannot decode " + file.string());
            }
            if (channels == 3) {
                cv::cvtColor(img, img, cv::COLOR_BGR2RGB);
            }
            ImageShape s{channels, img.rows, img.cols};
            if (out.size() == 0 && out.pixels.empty()) {
                out.shape = s;
            } else if (!(s == out.shape)) {
                throw DataError("image " + file.string() + " differs in size from earlier images");
            }
            const std::size_t base = out.pixels.size();
            out.pixels.resize(base + s.pixels());
            for (int y = 0; y < img.rows; ++y) {
                const auto* row = img.ptr<unsigned char>(y);
                for (int x = 0; x < img.cols; ++x) {
                    for (int c = 0; c < channels; ++c) {
                        out.pixels[base + (c * img.rows + y) * img.cols + x] = row[x * channels + c] / 255.0f;
                    }
                }
            }
            out.labels.push_back(static_cast<int>(cls));
        }
    }
    return out;
}

ImageBatch load_dataset(const fs::path& dir, DatasetPart part, int channels, FitMode fit) {
    ImageBatch raw;
    const char* sub = part == DatasetPart::Train ? "train" : "test";
    if (has_idx(dir, part == DatasetPart::Train ? "train" : "t10k")) {
        raw = load_idx(dir, part);
    } else if (fs::is_directory(dir / sub)) {
        raw = load_png_folder(dir / sub, channels == 1 ? 1 : 3);
    } else {
        raw = load_png_folder(dir, channels == 1 ? 1 : 3);
    }
    return replicate_channels(fit_to_32(raw, fit), channels);
}

void save_png_folder(const ImageBatch& images, const fs::path& dir, const std::string& prefix) {
    fs::create_directories(dir);
    const auto& s = images.shape;
    const std::size_t plane = static_cast<std::size_t>(s.height) * s.width;
    const int cv_type = s.channels == 1 ? CV_8UC1 : CV_8UC3;
    if (s.channels != 1 && s.channels != 3) {
        throw ConfigError("PNG export supports 1 or 3 channels");
    }
    for (std::size_t i = 0; i < images.size(); ++i) {
        auto src = images.image(i);
        cv::Mat img(s.height, s.width, cv_type);
        for (int y = 0; y < s.height; ++y) {
            auto* row = img.ptr<unsigned char>(y);
            for (int x = 0; x < s.width; ++x) {
                for (int c = 0; c < s.channels; ++c) {
                    // OpenCV stores BGR
                    int src_c = s.channels == 3 ? 2 - c : c;
                    float v = std::clamp(src[src_c * plane + y * s.width + x], 0.0f, 1.0f);
                    row[x * s.channels + c] = static_cast<unsigned char>(std::lround(v * 255.0f));
                }
            }
        }
        auto path = dir / (prefix + std::to_string(i) + ".png");
        if (!cv::imwrite(path.string(), img)) {
            throw DataError("cannot write " + path.string());
        }
    }
}


ImageBatch cap_per_class(const ImageBatch& images, std::size_t max_per_class) {
    std::map<int, std::size_t> seen;
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (seen[images.labels[i]]++ < max_per_class) keep.push_back(i);
    }
    return images.gather(keep);
}

ImageBatch build_open_test_set(const SplitSpec& split, const ImageBatch& test, int channels) {
    split.validate();
    ImageBatch out = select_classes(test, split.known_classes);
    const auto& u = split.unknown;
    ImageBatch unknown;
    switch (u.kind) {
    case UnknownSourceKind::HeldOutClasses: {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < test.size(); ++i) {
            if (std::find(u.classes.begin(), u.classes.end(), test.labels[i]) != u.classes.end()) idx.push_back(i);
        }
        unknown = test.gather(idx);
        break;
    }
    case UnknownSourceKind::External:
        if (u.dataset.empty()) throw ConfigError("external unknown source needs a dataset directory");
        unknown = load_dataset(u.dataset, DatasetPart::Test, channels, u.transform);
        break;
    case UnknownSourceKind::SyntheticNoise:
        unknown = synth_noise(u.count > 0 ? u.count : out.size(), out.shape, split.trial_seed);
        break;
    case UnknownSourceKind::NoisedCopy:
        unknown = noised_copy(out, split.trial_seed);
        if (u.count > 0 && u.count < unknown.size()) {
            std::vector<std::size_t> idx(u.count);
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            unknown = unknown.gather(idx);
        }
        break;
    }
    if (!(unknown.shape == out.shape)) throw DataError("unknown samples do not match the known test image shape");
    unknown.labels.assign(unknown.size(), kUnknownLabel);
    out.append(unknown);
    return out;
}

} // namespace m2iosr
