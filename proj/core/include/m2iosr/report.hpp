#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "m2iosr/baselines.hpp"
#include "m2iosr/datasets.hpp"
#include "m2iosr/evaluation.hpp"
#include "m2iosr/labels.hpp"
#include "m2iosr/plot.hpp"
#include "m2iosr/trainer.hpp"

namespace m2iosr {

/// epoch, iteration, then every LossBreakdown field.
std::string loss_csv(std::span<const LossBreakdown> history);

/// One row per class center: class, then c0..c{J-1}.
std::string centers_csv(const torch::Tensor& centers);

/// sample_id, predicted_label ("unknown" for rejected samples), confidence.
std::string predictions_csv(std::span<const OpenSetPrediction> predictions);

/// Full report: per-class F1 keyed by class index or "unknown", macro-F1,
/// confusion matrix, openness, counts, tau and the split that produced it.
std::string eval_report_json(const EvalReport& report, const SplitSpec& split, double tau);

/// unknown_classes, openness, macro_f1, unknown_ratio.
std::string sweep_csv(std::span<const SweepPoint> curve);

/// baseline_id, seed, openness, macro_f1, closed_set_accuracy, unknown_classes, split_hash.
std::string ablation_csv(std::span<const AblationRow> rows);

/// Reads any CSV with `openness` and `macro_f1` columns. Rows are grouped by
/// `baseline_id` when that column exists, and values at equal openness are averaged.
std::vector<CurveSeries> read_curve_csv(const std::filesystem::path& path);

} // namespace m2iosr
