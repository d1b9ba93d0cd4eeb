#include "m2iosr/gaussian_constraint.hpp"

#include <string>

#include "m2iosr/errors.hpp"

namespace m2iosr {

ClassCenterMapImpl::ClassCenterMapImpl(std::int64_t num_known, std::int64_t latent_dim) {
    centers = register_parameter("centers", torch::randn({num_known, latent_dim}));
}

torch::Tensor ClassCenterMapImpl::forward(const torch::Tensor& one_hot) { return one_hot.matmul(centers); }

torch::Tensor ClassCenterMapImpl::center_of(std::int64_t k) {
    if (k < 0 || k >= num_known()) {
        throw ConfigError("class index " + std::to_string(k) + " outside 0.." + std::to_string(num_known() - 1));
    }
    return centers[k];
}

torch::Tensor ClassCenterMapImpl::centers_for(const torch::Tensor& labels) {
    if (labels.numel() > 0 && (labels.min().item<std::int64_t>() < 0 ||
                               labels.max().item<std::int64_t>() >= num_known())) {
        throw ConfigError("label outside 0.." + std::to_string(num_known() - 1));
    }
    return centers.index_select(0, labels);
}

torch::Tensor kl_per_sample(const LatentStats& stats, const torch::Tensor& center_rows) {
    require_finite(stats.mu, "latent mean");
    require_finite(stats.log_var, "latent log-variance");
    auto diff = stats.mu - center_rows;
    return 0.5 * (diff.square() + stats.log_var.exp() - 1.0 - stats.log_var).sum(1);
}

torch::Tensor kl_loss(const LatentStats& stats, const torch::Tensor& labels, ClassCenterMap& centers) {
    return kl_per_sample(stats, centers->centers_for(labels)).mean();
}

} // namespace m2iosr
