#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "m2iosr/encoder.hpp"

namespace m2iosr {

/// log(1 + exp(s)) without overflow.
double softplus(double s);
torch::Tensor softplus(const torch::Tensor& s);

/// Which expectation terms of the Jensen-Shannon objective are kept.
enum class PairTerms { Both, PositiveOnly, NegativeOnly };

std::string to_string(PairTerms terms);

/// E_pos[-softplus(-s)] - E_neg[softplus(s)], i.e. E_pos[log sigmoid(s)] +
/// E_neg[log(1 - sigmoid(s))]. Higher means the discriminator separates
/// dependent from independent pairs. Dropped terms contribute nothing.
torch::Tensor jsd_objective(const torch::Tensor& pos_scores, const torch::Tensor& neg_scores,
                            PairTerms terms = PairTerms::Both);
double jsd_objective(std::span<const double> pos_scores, std::span<const double> neg_scores);

/// Indices of the cyclic shift i -> (i + 1) mod batch. Throws for batch < 2.
std::vector<std::int64_t> negative_pairing(std::int64_t batch);

/// Reorders dim 0 of `features` by negative_pairing, so no row meets itself.
torch::Tensor make_negative_pairing(const torch::Tensor& features);

/// Conv adapter on f16 followed by a 512-512-1 scorer on [flatten(adapter), z].
class GlobalDiscriminatorImpl : public torch::nn::Module {
public:
    GlobalDiscriminatorImpl(std::int64_t map_channels, std::int64_t map_h, std::int64_t map_w, std::int64_t latent_dim,
                            std::int64_t adapter_channels = 64, std::int64_t hidden = 512);

    /// Flattened adapter features, (batch, adapter_channels * h * w).
    torch::Tensor adapt(const torch::Tensor& f16);
    /// Raw scores (batch) for adapted features paired row-wise with z.
    torch::Tensor score(const torch::Tensor& adapted, const torch::Tensor& z);
    torch::Tensor forward(const torch::Tensor& f16, const torch::Tensor& z) { return score(adapt(f16), z); }

    /// Sets the last layer's weights and bias to zero so every score is 0.
    void zero_output_layer();

private:
    torch::nn::Sequential adapter_;
    torch::nn::Sequential scorer_;
    std::int64_t flat_dim_;
};
TORCH_MODULE(GlobalDiscriminator);

/// Three 1x1 convolutions (512-512-1) scoring every location of a map
/// concatenated with a broadcast summary vector.
class LocalDiscriminatorImpl : public torch::nn::Module {
public:
    LocalDiscriminatorImpl(std::int64_t map_channels, std::int64_t summary_dim, std::int64_t hidden = 512);

    /// Raw scores (batch, h, w).
    torch::Tensor forward(const torch::Tensor& map, const torch::Tensor& summary);
    void zero_output_layer();

private:
    torch::nn::Sequential net_;
};
TORCH_MODULE(LocalDiscriminator);

enum class PairKind { L1t16, L1t4, L4t4 };

std::string to_string(PairKind kind);
PairKind pair_kind_from_string(const std::string& name);

/// Global MI estimate: positives pair f16(x) with z(x), negatives f16(x_hat) with z(x).
torch::Tensor global_mi(const torch::Tensor& f16, const torch::Tensor& z, GlobalDiscriminator& disc,
                        PairTerms terms = PairTerms::Both);

/// Local MI estimate averaged over every location of `map`. Negatives pair
/// the shifted image's map with the original summary.
torch::Tensor local_mi(const torch::Tensor& map, const torch::Tensor& summary, LocalDiscriminator& disc,
                       PairTerms terms = PairTerms::Both);

/// Convex weights of the three local terms.
struct LocalWeights {
    double a1 = 0.7; // 1t16
    double a2 = 0.1; // 1t4
    double a3 = 0.2; // 4t4

    /// Throws ConfigError unless all weights are >= 0 and sum to 1 within 1e-9.
    void validate() const;
};

double local_mi_loss(double l_1t16, double l_1t4, double l_4t4, const LocalWeights& w);
torch::Tensor local_mi_loss(const torch::Tensor& l_1t16, const torch::Tensor& l_1t4, const torch::Tensor& l_4t4,
                            const LocalWeights& w);

struct MITerms {
    torch::Tensor l_global;
    torch::Tensor l_1t16;
    torch::Tensor l_1t4;
    torch::Tensor l_4t4;
};

/// Every discriminator plus the learned projection that summarizes f4 for
/// the 4t4 pair.
class MIHeadsImpl : public torch::nn::Module {
public:
    explicit MIHeadsImpl(const EncoderConfig& config);

    /// Summary vector for the 4t4 pair: projection of globally pooled f4.
    torch::Tensor summarize_f4(const torch::Tensor& f4);

    /// All four MI terms for one forward pass; z is the latent fed to every pair.
    MITerms compute(const FeatureTaps& taps, const torch::Tensor& z, PairTerms terms = PairTerms::Both);

    /// A single local term by kind.
    torch::Tensor local_term(PairKind kind, const FeatureTaps& taps, const torch::Tensor& z,
                             PairTerms terms = PairTerms::Both);

    GlobalDiscriminator global_disc{nullptr};
    LocalDiscriminator local_1t16{nullptr};
    LocalDiscriminator local_1t4{nullptr};
    LocalDiscriminator local_4t4{nullptr};
    torch::nn::Linear proj_4t4{nullptr};
};
TORCH_MODULE(MIHeads);

} // namespace m2iosr
