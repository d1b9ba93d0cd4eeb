#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "m2iosr/datasets.hpp"
#include "m2iosr/labels.hpp"

namespace m2iosr {

/// Open-set scores over K known classes plus the unknown class.
///
/// Index K in `per_class_f1` and in both axes of `confusion` stands for the
/// unknown class. A class that appears in neither truth nor prediction has no
/// F1 value and is left out of the macro mean.
struct EvalReport {
    int num_known = 0;
    std::vector<std::optional<double>> per_class_f1;
    double macro_f1 = 0.0;
    std::vector<std::vector<std::int64_t>> confusion; // rows = truth, cols = prediction
    double openness = 0.0; // filled in by callers that know the unknown class count
    std::int64_t n_samples = 0;
    std::int64_t n_unknown = 0; // ground-truth unknown samples
};

/// 1 - sqrt(2 * c_train / (c_train + c_test_total)).
double openness(int c_train, int c_test_total);

/// Builds the (K+1)x(K+1) confusion matrix and per-class / macro F1.
EvalReport macro_f1(std::span<const int> predicted, std::span<const int> truth, int num_known);
EvalReport macro_f1(std::span<const OpenSetPrediction> predictions, std::span<const int> truth, int num_known);

/// Fraction of samples whose argmax label matches the truth.
double accuracy(std::span<const int> predicted, std::span<const int> truth);

/// A group of unknown-class test samples. `class_ids` names the classes the
/// samples were drawn from; they must be disjoint from the known classes.
struct UnknownPool {
    std::vector<int> class_ids;
    ImageBatch images;
};

struct SweepPoint {
    int unknown_classes = 0;
    double openness = 0.0;
    double macro_f1 = 0.0;
    double unknown_ratio = 0.0; // unknown samples / all samples
};

using Predictor = std::function<std::vector<OpenSetPrediction>(const ImageBatch&, double tau)>;

/// Scores known test samples (labels 0..K-1) together with each pool in turn.
/// Pools are evaluated in input order; duplicates are kept.
std::vector<SweepPoint> sweep_openness(const Predictor& predict, const ImageBatch& known_test,
                                       std::span<const int> known_class_ids, std::span<const UnknownPool> pools,
                                       double tau);

/// Builds nested pools from the first n of `unknown_classes` for each n in `pool_sizes`.
/// `images` carries the original class ids as labels.
std::vector<UnknownPool> nested_pools(const ImageBatch& images, std::span<const int> unknown_classes,
                                      std::span<const int> pool_sizes);

} // namespace m2iosr
