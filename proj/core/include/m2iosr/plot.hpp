#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace m2iosr {

/// One line of an F1-vs-openness plot.
struct CurveSeries {
    std::string name;
    std::vector<std::pair<double, double>> points; // (openness, macro_f1), sorted by openness
};

inline constexpr int kConfusionCellPx = 48;
inline constexpr int kConfusionMarginPx = 64;

/// Pixel (width, height) of the heatmap for an n x n matrix.
std::pair<int, int> confusion_png_size(int n_classes);

/// Row-normalized heatmap with one cell per matrix entry and the count
/// printed in each cell. The last row/column is labeled "unk".
void write_confusion_png(const std::vector<std::vector<std::int64_t>>& confusion, const std::filesystem::path& path);

/// Line plot with x = openness in [0,1] and y = macro-F1 in [0,1].
void write_curve_png(std::span<const CurveSeries> series, const std::filesystem::path& path);

} // namespace m2iosr
