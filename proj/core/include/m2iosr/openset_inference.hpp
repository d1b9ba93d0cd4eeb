#pragma once

#include <span>
#include <vector>

#include <torch/torch.h>

#include "m2iosr/datasets.hpp"
#include "m2iosr/labels.hpp"
#include "m2iosr/model.hpp"

namespace m2iosr {

inline constexpr double kDefaultTau = 0.95;

/// Thresholds one probability vector: unknown when max < tau, else the
/// lowest index attaining the max.
OpenSetPrediction decide(std::span<const double> probabilities, double tau);

/// Row-wise softmax of `logits` (batch, K) followed by decide().
std::vector<OpenSetPrediction> predict_from_logits(const torch::Tensor& logits, double tau);

/// Eval-mode logits classify(mu) for every image, in chunks of `chunk`.
torch::Tensor eval_logits(OsrModel& model, const ImageBatch& images, std::int64_t chunk = 256);

/// Open-set predictions with the model in eval mode. Throws ConfigError unless 0 < tau < 1.
std::vector<OpenSetPrediction> predict(OsrModel& model, const ImageBatch& images, double tau = kDefaultTau);

/// Closed-set argmax labels (no threshold).
std::vector<int> predict_closed(OsrModel& model, const ImageBatch& images);

} // namespace m2iosr
