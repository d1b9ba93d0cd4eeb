#include "m2iosr/openset_inference.hpp"

#include <algorithm>
#include <string>

#include "m2iosr/errors.hpp"

namespace m2iosr {

OpenSetPrediction decide(std::span<const double> probabilities, double tau) {
    if (probabilities.empty()) throw ConfigError("empty probability vector");
    auto best = std::max_element(probabilities.begin(), probabilities.end()); // first maximum
    OpenSetPrediction p;
    p.confidence = *best;
    p.label = p.confidence < tau ? kUnknownLabel : static_cast<int>(best - probabilities.begin());
    return p;
}

std::vector<OpenSetPrediction> predict_from_logits(const torch::Tensor& logits, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) {
        throw ConfigError("tau must lie in (0, 1), got " + std::to_string(tau));
    }
    auto probs = torch::softmax(logits.to(torch::kFloat64), 1).contiguous();
    const auto n = probs.size(0);
    const auto k = probs.size(1);
    const double* data = probs.data_ptr<double>();
    std::vector<OpenSetPrediction> out;
    out.reserve(n);
    for (std::int64_t i = 0; i < n; ++i) {
        out.push_back(decide(std::span<const double>(data + i * k, k), tau));
    }
    return out;
}

torch::Tensor eval_logits(OsrModel& model, const ImageBatch& images, std::int64_t chunk) {
    model->eval();
    torch::NoGradGuard guard;
    const auto dtype = torch::typeMetaToScalarType(model->parameters().front().dtype());
    const auto n = static_cast<std::int64_t>(images.size());
    std::vector<torch::Tensor> parts;
    auto all = to_tensor(images, dtype);
    for (std::int64_t start = 0; start < n; start += chunk) {
        auto x = all.slice(0, start, std::min(n, start + chunk));
        auto stats = model->encoder->forward(x).stats;
        parts.push_back(model->classifier->forward(stats.mu));
    }
    if (parts.empty()) {
        return torch::zeros({0, model->config().num_known}, torch::TensorOptions().dtype(dtype));
    }
    return torch::cat(parts, 0);
}

std::vector<OpenSetPrediction> predict(OsrModel& model, const ImageBatch& images, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) {
        throw ConfigError("tau must lie in (0, 1), got " + std::to_string(tau));
    }
    return predict_from_logits(eval_logits(model, images), tau);
}

std::vector<int> predict_closed(OsrModel& model, const ImageBatch& images) {
    auto idx = eval_logits(model, images).argmax(1).contiguous();
    const auto* d = idx.data_ptr<std::int64_t>();
    return std::vector<int>(d, d + idx.numel());
}

} // namespace m2iosr
