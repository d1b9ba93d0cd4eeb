#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <torch/torch.h>

#include "m2iosr/datasets.hpp"

namespace m2iosr {

/// Shape of the multi-tap encoder.
///
/// Four conv stages run at 1, 1/2, 1/4 and 1/8 of the input resolution. The
/// second stage output is the f16 tap, the fourth the f4 tap, so 32x32 inputs
/// give 16x16 and 4x4 maps. A pooled linear head on the f4 tap emits the
/// Gaussian latent statistics.
struct EncoderConfig {
    ImageShape input{3, 32, 32};
    std::vector<std::int64_t> stage_widths{64, 128, 192, 256};
    std::int64_t latent_dim = 32;
    std::int64_t num_known = 6;
    std::optional<std::int64_t> classifier_hidden;
    std::int64_t adapter_channels = 64; // global discriminator conv adapter
    std::int64_t disc_hidden = 512;     // hidden width of every discriminator

    void validate() const;

    std::int64_t tap16_channels() const { return stage_widths.at(1); }
    std::int64_t tap4_channels() const { return stage_widths.at(3); }
    std::int64_t tap16_height() const { return input.height / 2; }
    std::int64_t tap16_width() const { return input.width / 2; }
    std::int64_t tap4_height() const { return input.height / 8; }
    std::int64_t tap4_width() const { return input.width / 8; }
};

/// Per-sample Gaussian posterior parameters, each (batch, J).
struct LatentStats {
    torch::Tensor mu;
    torch::Tensor log_var;
};

/// Encoder outputs from one forward pass.
struct FeatureTaps {
    torch::Tensor f16; // (batch, C16, H/2, W/2)
    torch::Tensor f4;  // (batch, C4, H/8, W/8)
    LatentStats stats;
};

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

class EncoderImpl : public torch::nn::Module {
public:
    explicit EncoderImpl(const EncoderConfig& config);

    /// Throws ConfigError on a shape mismatch and NumericError naming the
    /// stage that produced a non-finite activation.
    FeatureTaps forward(const torch::Tensor& images);

    const EncoderConfig& config() const { return config_; }

private:
    EncoderConfig config_;
    torch::nn::ModuleList stages_;
    torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(Encoder);

/// Linear (or one-hidden-layer) classifier on the latent code.
class ClassifierImpl : public torch::nn::Module {
public:
    ClassifierImpl(std::int64_t latent_dim, std::int64_t num_known, std::optional<std::int64_t> hidden);
    torch::Tensor forward(const torch::Tensor& z);

private:
    torch::nn::Sequential net_;
};
TORCH_MODULE(Classifier);

enum class LatentMode { Train, Eval };

/// Eval mode returns mu. Train mode returns mu + exp(log_var / 2) * eps with
/// eps ~ N(0, I) drawn from `gen`; log_var is clamped to [-10, 10] first.
torch::Tensor sample_latent(const LatentStats& stats, LatentMode mode, torch::Generator gen);

/// Same as train-mode sampling with caller-supplied noise `eps`.
torch::Tensor reparameterize(const LatentStats& stats, const torch::Tensor& eps);

/// NCHW tensor view of a batch, converted to `dtype`.
torch::Tensor to_tensor(const ImageBatch& images, torch::Dtype dtype = torch::kFloat32);

/// Labels of a batch as an int64 tensor.
torch::Tensor labels_tensor(const ImageBatch& images);

/// Throws NumericError("non-finite <what>") unless every element is finite.
void require_finite(const torch::Tensor& t, const std::string& what);

} // namespace m2iosr
