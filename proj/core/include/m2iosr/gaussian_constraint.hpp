#pragma once

#include <cstdint>

#include <torch/torch.h>

#include "m2iosr/encoder.hpp"

namespace m2iosr {

/// Learned class means: a bias-free linear map from one-hot labels to the
/// latent space. Row k of `centers` is the mean of class k's Gaussian.
class ClassCenterMapImpl : public torch::nn::Module {
public:
    ClassCenterMapImpl(std::int64_t num_known, std::int64_t latent_dim);

    /// one_hot (batch, K) -> (batch, J).
    torch::Tensor forward(const torch::Tensor& one_hot);
    /// Row k; throws ConfigError when k is outside 0..K-1.
    torch::Tensor center_of(std::int64_t k);
    /// Rows for a batch of labels.
    torch::Tensor centers_for(const torch::Tensor& labels);

    std::int64_t num_known() const { return centers.size(0); }

    torch::Tensor centers; // (K, J)
};
TORCH_MODULE(ClassCenterMap);

/// Batch mean of KL(N(mu, diag(exp(log_var))) || N(center_k, I)):
///   0.5 * sum_j ((mu_j - c_j)^2 + exp(log_var_j) - 1 - log_var_j)
torch::Tensor kl_loss(const LatentStats& stats, const torch::Tensor& labels, ClassCenterMap& centers);

/// Per-sample KL against explicit center rows (batch, J).
torch::Tensor kl_per_sample(const LatentStats& stats, const torch::Tensor& center_rows);

} // namespace m2iosr
