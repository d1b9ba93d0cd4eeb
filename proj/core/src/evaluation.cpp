#include "m2iosr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "m2iosr/errors.hpp"

namespace m2iosr {

double openness(int c_train, int c_test_total) {
    if (c_train < 1 || c_test_total < c_train) {
        throw ConfigError("openness needs c_test_total >= c_train >= 1, got c_train=" + std::to_string(c_train) +
                          " c_test_total=" + std::to_string(c_test_total));
    }
    return 1.0 - std::sqrt(2.0 * c_train / static_cast<double>(c_train + c_test_total));
}

namespace {

int to_index(int label, int num_known) {
    if (label == kUnknownLabel) return num_known;
    if (label < 0 || label >= num_known) {
        throw ConfigError("label " + std::to_string(label) + " outside 0.." + std::to_string(num_known - 1) +
                          " and not unknown");
    }
    return label;
}

} // namespace

EvalReport macro_f1(std::span<const int> predicted, std::span<const int> truth, int num_known) {
    if (predicted.size() != truth.size()) {
        throw ConfigError("prediction and truth counts differ");
    }
    if (num_known < 1) {
        throw ConfigError("num_known must be positive");
    }
    const int n_cls = num_known + 1;
    EvalReport r;
    r.num_known = num_known;
    r.n_samples = static_cast<std::int64_t>(truth.size());
    r.confusion.assign(n_cls, std::vector<std::int64_t>(n_cls, 0));
    for (std::size_t i = 0; i < truth.size(); ++i) {
        int t = to_index(truth[i], num_known);
        int p = to_index(predicted[i], num_known);
        ++r.confusion[t][p];
        if (t == num_known) ++r.n_unknown;
    }

    r.per_class_f1.assign(n_cls, std::nullopt);
    double sum = 0.0;
    int included = 0;
    for (int c = 0; c < n_cls; ++c) {
        std::int64_t tp = r.confusion[c][c];
        std::int64_t truth_count = 0;
        std::int64_t pred_count = 0;
        for (int k = 0; k < n_cls; ++k) {
            truth_count += r.confusion[c][k];
            pred_count += r.confusion[k][c];
        }
        if (truth_count == 0 && pred_count == 0) {
            continue;
        }
        double f1 = 0.0;
        if (tp > 0) {
            double precision = static_cast<double>(tp) / pred_count;
            double recall = static_cast<double>(tp) / truth_count;
            f1 = 2.0 * precision * recall / (precision + recall);
        }
        r.per_class_f1[c] = f1;
        sum += f1;
        ++included;
    }
    r.macro_f1 = included > 0 ? sum / included : 0.0;
    return r;
}

EvalReport macro_f1(std::span<const OpenSetPrediction> predictions, std::span<const int> truth, int num_known) {
    std::vector<int> labels;
    labels.reserve(predictions.size());
    for (const auto& p : predictions) labels.push_back(p.label);
    return macro_f1(labels, truth, num_known);
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
    if (predicted.size() != truth.size()) {
        throw ConfigError("prediction and truth counts differ");
    }
    if (truth.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
    return static_cast<double>(hits) / truth.size();
}

std::vector<SweepPoint> sweep_openness(const Predictor& predict, const ImageBatch& known_test,
                                       std::span<const int> known_class_ids, std::span<const UnknownPool> pools,
                                       double tau) {
    std::vector<SweepPoint> curve;
    if (pools.empty()) {
        return curve;
    }
    for (const auto& pool : pools) {
        for (int c : pool.class_ids) {
            if (std::find(known_class_ids.begin(), known_class_ids.end(), c) != known_class_ids.end()) {
                throw ConfigError("unknown pool class " + std::to_string(c) + " is also a known class");
            }
        }
    }
    const int num_known = static_cast<int>(known_class_ids.size());
    const auto known_preds = predict(known_test, tau);

    for (const auto& pool : pools) {
        auto unknown_preds = predict(pool.images, tau);
        std::vector<OpenSetPrediction> preds = known_preds;
        preds.insert(preds.end(), unknown_preds.begin(), unknown_preds.end());
        std::vector<int> truth = known_test.labels;
        truth.insert(truth.end(), unknown_preds.size(), kUnknownLabel);

        const auto report = macro_f1(preds, truth, num_known);
        SweepPoint pt;
        pt.unknown_classes = static_cast<int>(pool.class_ids.size());
        pt.openness = openness(num_known, num_known + pt.unknown_classes);
        pt.macro_f1 = report.macro_f1;
        pt.unknown_ratio = truth.empty() ? 0.0 : static_cast<double>(unknown_preds.size()) / truth.size();
        curve.push_back(pt);
    }
    return curve;
}

std::vector<UnknownPool> nested_pools(const ImageBatch& images, std::span<const int> unknown_classes,
                                      std::span<const int> pool_sizes) {
    std::vector<UnknownPool> pools;
    for (int n : pool_sizes) {
        if (n < 0 || static_cast<std::size_t>(n) > unknown_classes.size()) {
            throw ConfigError("pool size " + std::to_string(n) + " exceeds the " +
                              std::to_string(unknown_classes.size()) + " available unknown classes");
        }
        UnknownPool pool;
        pool.class_ids.assign(unknown_classes.begin(), unknown_classes.begin() + n);
        std::vector<std::size_t> keep;
        for (std::size_t i = 0; i < images.size(); ++i) {
            if (std::find(pool.class_ids.begin(), pool.class_ids.end(), images.labels[i]) != pool.class_ids.end()) {
                keep.push_back(i);
            }
        }
        pool.images = images.gather(keep);
        pools.push_back(std::move(pool));
    }
    return pools;
}

} // namespace m2iosr
