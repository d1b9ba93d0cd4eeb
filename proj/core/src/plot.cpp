#include "m2iosr/plot.hpp"

#include <algorithm>
#include <cstdio>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "m2iosr/errors.hpp"

namespace fs = std::filesystem;

namespace m2iosr {

namespace {

void save(const cv::Mat& img, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), img)) throw DataError("cannot write " + path.string());
}

void text(cv::Mat& img, const std::string& s, cv::Point at, double scale = 0.4, cv::Scalar color = {0, 0, 0}) {
    cv::putText(img, s, at, cv::FONT_HERSHEY_SIMPLEX, scale, color, 1, cv::LINE_AA);
}

} // namespace

std::pair<int, int> confusion_png_size(int n_classes) {
    const int side = kConfusionMarginPx + n_classes * kConfusionCellPx + kConfusionCellPx / 2;
    return {side, side};
}

void write_confusion_png(const std::vector<std::vector<std::int64_t>>& confusion, const fs::path& path) {
    const int n = static_cast<int>(confusion.size());
    for (const auto& row : confusion) {
        if (static_cast<int>(row.size()) != n) throw ConfigError("confusion matrix must be square");
    }
    auto [w, h] = confusion_png_size(n);
    cv::Mat img(h, w, CV_8UC3, cv::Scalar(255, 255, 255));
    auto label = [n](int i) { return i == n - 1 ? std::string("unk") : std::to_string(i); };

    for (int r = 0; r < n; ++r) {
        std::int64_t row_sum = 0;
        for (auto v : confusion[r]) row_sum += v;
        for (int c = 0; c < n; ++c) {
            const double frac = row_sum > 0 ? static_cast<double>(confusion[r][c]) / row_sum : 0.0;
            const int shade = static_cast<int>(255.0 * (1.0 - frac));
            cv::Rect cell(kConfusionMarginPx + c * kConfusionCellPx, kConfusionMarginPx + r * kConfusionCellPx,
                          kConfusionCellPx, kConfusionCellPx);
            cv::rectangle(img, cell, cv::Scalar(255, shade, shade), cv::FILLED);
            cv::rectangle(img, cell, cv::Scalar(160, 160, 160), 1);
            const cv::Scalar ink = frac > 0.5 ? cv::Scalar(255, 255, 255) : cv::Scalar(0, 0, 0);
            text(img, std::to_string(confusion[r][c]), {cell.x + 4, cell.y + kConfusionCellPx / 2 + 4}, 0.35, ink);
        }
        text(img, label(r), {kConfusionMarginPx - 30, kConfusionMarginPx + r * kConfusionCellPx + 28});
        text(img, label(r), {kConfusionMarginPx + r * kConfusionCellPx + 12, kConfusionMarginPx - 10});
    }
    text(img, "pred", {kConfusionMarginPx, 16});
    text(img, "true", {4, kConfusionMarginPx - 10});
    save(img, path);
}

void write_curve_png(std::span<const CurveSeries> series, const fs::path& path) {
    constexpr int kW = 720, kH = 480, kLeft = 60, kRight = 180, kTop = 30, kBottom = 50;
    cv::Mat img(kH, kW, CV_8UC3, cv::Scalar(255, 255, 255));
    const int pw = kW - kLeft - kRight;
    const int ph = kH - kTop - kBottom;
    auto to_px = [&](double x, double y) {
        return cv::Point(kLeft + static_cast<int>(std::clamp(x, 0.0, 1.0) * pw),
                         kTop + static_cast<int>((1.0 - std::clamp(y, 0.0, 1.0)) * ph));
    };

    for (int i = 0; i <= 10; ++i) {
        const double v = i / 10.0;
        cv::line(img, to_px(v, 0), to_px(v, 1), cv::Scalar(230, 230, 230), 1);
        cv::line(img, to_px(0, v), to_px(1, v), cv::Scalar(230, 230, 230), 1);
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%.1f", v);
        text(img, buf, to_px(v, 0) + cv::Point(-10, 18));
        text(img, buf, to_px(0, v) + cv::Point(-30, 4));
    }
    cv::rectangle(img, to_px(0, 1), to_px(1, 0), cv::Scalar(0, 0, 0), 1);
    text(img, "openness", {kLeft + pw / 2 - 30, kH - 10}, 0.5);
    text(img, "macro-F1", {4, kTop - 10}, 0.5);

    static const cv::Scalar palette[] = {{180, 119, 31}, {14, 127, 255}, {44, 160, 44},  {40, 39, 214},
                                         {189, 103, 148}, {75, 86, 140}, {194, 119, 227}, {127, 127, 127},
                                         {34, 189, 188}};
    for (std::size_t s = 0; s < series.size(); ++s) {
        const auto color = palette[s % std::size(palette)];
        const auto& pts = series[s].points;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            auto p = to_px(pts[i].first, pts[i].second);
            cv::circle(img, p, 3, color, cv::FILLED, cv::LINE_AA);
            if (i > 0) cv::line(img, to_px(pts[i - 1].first, pts[i - 1].second), p, color, 2, cv::LINE_AA);
        }
        const int ly = kTop + 16 + static_cast<int>(s) * 20;
        cv::line(img, {kW - kRight + 15, ly - 4}, {kW - kRight + 40, ly - 4}, color, 2);
        text(img, series[s].name, {kW - kRight + 46, ly});
    }
    save(img, path);
}

} // namespace m2iosr
