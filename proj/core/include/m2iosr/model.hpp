#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "m2iosr/encoder.hpp"
#include "m2iosr/gaussian_constraint.hpp"
#include "m2iosr/mi_objectives.hpp"

namespace m2iosr {

/// Which max-min terms a model variant optimizes. Disabled terms are not
/// evaluated and read as zero in loss reports.
struct ObjectiveSpec {
    bool global_mi = true;
    bool local_1t16 = true;
    bool local_1t4 = true;
    bool local_4t4 = true;
    bool kl = true;
    bool reconstruction = false;
    PairTerms terms = PairTerms::Both;

    bool any_mi() const { return global_mi || local_1t16 || local_1t4 || local_4t4; }
    /// False for a plain cross-entropy model, which skips the max-min phase.
    bool has_maxmin() const { return any_mi() || kl || reconstruction; }
};

/// Transposed-conv decoder from the latent code back to the input image,
/// upsampling 1/8 -> 1/4 -> 1/2 -> 1 with the encoder's stage widths.
class DecoderImpl : public torch::nn::Module {
public:
    explicit DecoderImpl(const EncoderConfig& config);
    torch::Tensor forward(const torch::Tensor& z);
    void zero_init();

private:
    std::int64_t c4_, h4_, w4_;
    torch::nn::Linear fc_{nullptr};
    torch::nn::Sequential up_;
};
TORCH_MODULE(Decoder);

/// Everything trained together: encoder, classifier, discriminators, the 4t4
/// projection, the class centers and, for the auto-encoder baseline, a decoder.
class OsrModelImpl : public torch::nn::Module {
public:
    OsrModelImpl(const EncoderConfig& config, bool with_decoder);

    const EncoderConfig& config() const { return config_; }
    bool has_decoder() const { return !decoder.is_empty(); }

    /// Group name of a parameter or buffer ("encoder", "global_disc", ...).
    static std::string group_of(const std::string& name);
    /// Distinct groups, in registration order.
    std::vector<std::string> parameter_groups() const;

    Encoder encoder{nullptr};
    Classifier classifier{nullptr};
    MIHeads heads{nullptr};
    ClassCenterMap centers{nullptr};
    Decoder decoder{nullptr};

private:
    EncoderConfig config_;
};
TORCH_MODULE(OsrModel);

/// Builds a model with parameters drawn from `seed`. Construction order is
/// fixed, so variants that share a seed share encoder and classifier weights.
OsrModel make_model(const EncoderConfig& config, std::uint64_t seed, bool with_decoder = false);

} // namespace m2iosr
