#include "m2iosr/encoder.hpp"

#include <string>

#include "m2iosr/errors.hpp"

namespace nn = torch::nn;

namespace m2iosr {

void EncoderConfig::validate() const {
    if (stage_widths.size() != 4) {
        throw ConfigError("stage_widths must list exactly 4 stages, got " + std::to_string(stage_widths.size()));
    }
    for (auto w : stage_widths) {
        if (w < 1) throw ConfigError("stage widths must be positive");
    }
    if (input.channels < 1 || input.height < 8 || input.width < 8 || input.height % 8 != 0 ||
        input.width % 8 != 0) {
        throw ConfigError("input height and width must be positive multiples of 8, got " +
                          std::to_string(input.height) + "x" + std::to_string(input.width));
    }
    if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
    if (num_known < 2) throw ConfigError("num_known must be >= 2");
    if (classifier_hidden && *classifier_hidden < 1) throw ConfigError("classifier_hidden must be >= 1");
    if (adapter_channels < 1 || disc_hidden < 1) throw ConfigError("discriminator widths must be positive");
}

namespace {

nn::Sequential conv_stage(std::int64_t in, std::int64_t out) {
    return nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1).bias(false)), nn::BatchNorm2d(out),
                          nn::ReLU(), nn::Conv2d(nn::Conv2dOptions(out, out, 3).padding(1).bias(false)),
                          nn::BatchNorm2d(out), nn::ReLU());
}

} // namespace

EncoderImpl::EncoderImpl(const EncoderConfig& config) : config_(config) {
    config_.validate();
    std::int64_t in = config_.input.channels;
    for (auto w : config_.stage_widths) {
        stages_->push_back(conv_stage(in, w));
        in = w;
    }
    register_module("stages", stages_);
    head_ = register_module("head", nn::Linear(config_.tap4_channels(), 2 * config_.latent_dim));
}

FeatureTaps EncoderImpl::forward(const torch::Tensor& images) {
    const auto& in = config_.input;
    if (images.dim() != 4 || images.size(1) != in.channels || images.size(2) != in.height ||
        images.size(3) != in.width || images.size(0) < 1) {
        throw ConfigError("encoder expects (batch, " + std::to_string(in.channels) + ", " +
                          std::to_string(in.height) + ", " + std::to_string(in.width) + ") input, got " +
                          c10::str(images.sizes()));
    }
    FeatureTaps taps;
    torch::Tensor x = images;
    for (std::size_t i = 0; i < stages_->size(); ++i) {
        if (i > 0) {
            x = torch::max_pool2d(x, 2, 2);
        }
        x = stages_[i]->as<nn::Sequential>()->forward(x);
        require_finite(x, "activation in encoder stage " + std::to_string(i));
        if (i == 1) taps.f16 = x;
        if (i == 3) taps.f4 = x;
    }
    auto pooled = taps.f4.mean({2, 3});
    auto out = head_->forward(pooled);
    require_finite(out, "activation in encoder latent head");
    auto parts = out.chunk(2, 1);
    taps.stats.mu = parts[0];
    taps.stats.log_var = parts[1].clamp(kLogVarMin, kLogVarMax);
    return taps;
}

ClassifierImpl::ClassifierImpl(std::int64_t latent_dim, std::int64_t num_known, std::optional<std::int64_t> hidden) {
    if (hidden) {
        net_ = nn::Sequential(nn::Linear(latent_dim, *hidden), nn::ReLU(), nn::Linear(*hidden, num_known));
    } else {
        net_ = nn::Sequential(nn::Linear(latent_dim, num_known));
    }
    register_module("net", net_);
}

torch::Tensor ClassifierImpl::forward(const torch::Tensor& z) { return net_->forward(z); }

torch::Tensor reparameterize(const LatentStats& stats, const torch::Tensor& eps) {
    auto std_dev = torch::exp(0.5 * stats.log_var.clamp(kLogVarMin, kLogVarMax));
    return stats.mu + std_dev * eps;
}

torch::Tensor sample_latent(const LatentStats& stats, LatentMode mode, torch::Generator gen) {
    require_finite(stats.mu, "latent mean");
    if (mode == LatentMode::Eval) {
        return stats.mu;
    }
    auto eps = torch::randn(stats.mu.sizes(), gen, stats.mu.options());
    return reparameterize(stats, eps);
}

torch::Tensor to_tensor(const ImageBatch& images, torch::Dtype dtype) {
    const auto& s = images.shape;
    auto t = torch::from_blob(const_cast<float*>(images.pixels.data()),
                              {static_cast<std::int64_t>(images.size()), s.channels, s.height, s.width},
                              torch::kFloat32);
    return t.to(dtype, /*non_blocking=*/false, /*copy=*/true);
}

torch::Tensor labels_tensor(const ImageBatch& images) {
    std::vector<std::int64_t> v(images.labels.begin(), images.labels.end());
    return torch::tensor(v, torch::kInt64);
}

void require_finite(const torch::Tensor& t, const std::string& what) {
    if (!torch::isfinite(t).all().item<bool>()) {
        throw NumericError("non-finite " + what);
    }
}

} // namespace m2iosr
