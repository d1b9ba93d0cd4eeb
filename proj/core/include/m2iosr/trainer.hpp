#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "m2iosr/datasets.hpp"
#include "m2iosr/model.hpp"

namespace m2iosr {

struct TrainConfig {
    double beta1 = 0.5;
    double beta2 = 1.0;
    double gamma = 0.1;
    LocalWeights local;
    double lr = 0.01;
    double momentum = 0.9;
    int lr_decay_every = 50;
    double lr_decay_factor = 0.1;
    int batch_size = 64;
    int epochs = 10;
    std::uint64_t seed = 0;

    void validate() const;
};

/// lr * factor^floor(epoch / decay_every), epochs counted from 0.
double lr_at_epoch(const TrainConfig& config, int epoch);

/// Loss terms of one batch, measured before the parameter update.
struct LossBreakdown {
    int epoch = 0;
    std::int64_t iteration = 0;
    double l_global = 0.0;
    double l_1t16 = 0.0;
    double l_1t4 = 0.0;
    double l_4t4 = 0.0;
    double l_local = 0.0;
    double l_kl = 0.0;
    double l_recon = 0.0;
    double l_maxmin_total = 0.0; // -(beta1*l_global + beta2*l_local) + gamma*l_kl + l_recon
    double l_ce = 0.0;
    double total = 0.0;          // l_maxmin_total + l_ce

    static const std::vector<std::string>& field_names();
    std::vector<double> values() const; // same order as field_names() after epoch/iteration
};

/// Differentiable max-min terms of one batch.
struct MaxminTerms {
    torch::Tensor l_global, l_1t16, l_1t4, l_4t4, l_local, l_kl, l_recon, total;
};

/// Evaluates the max-min objective with explicit reparameterization noise
/// `eps` (batch, J). Disabled terms are zero scalars.
MaxminTerms maxmin_objective(OsrModel& model, const torch::Tensor& images, const torch::Tensor& labels,
                             const torch::Tensor& eps, const TrainConfig& config, const ObjectiveSpec& objective);

/// Mean cross-entropy of the classifier on the reparameterized latent.
torch::Tensor classification_objective(OsrModel& model, const torch::Tensor& images, const torch::Tensor& labels,
                                       const torch::Tensor& eps);

/// Alternating max-min / classification training with momentum SGD.
///
/// Every batch gets one max-min update (skipped when the objective has no
/// max-min terms) followed by one classification update. A single optimizer
/// holds all parameter groups; groups without a gradient in a phase are left
/// untouched by that phase.
class Trainer {
public:
    using EpochCallback = std::function<void(int epoch, const Trainer&)>;

    Trainer(OsrModel model, TrainConfig config, ObjectiveSpec objective = {});

    LossBreakdown maxmin_step(const torch::Tensor& images, const torch::Tensor& labels);
    double classification_step(const torch::Tensor& images, const torch::Tensor& labels);

    /// Both phases' losses for one batch with fixed noise and no update.
    LossBreakdown measure(const torch::Tensor& images, const torch::Tensor& labels, const torch::Tensor& eps);

    /// Runs config().epochs epochs over `data` (labels 0..K-1). Progress lines go
    /// to `progress` when non-null; `on_epoch_end` runs after each epoch.
    const std::vector<LossBreakdown>& train(const ImageBatch& data, std::ostream* progress = nullptr,
                                            const EpochCallback& on_epoch_end = {});

    void set_epoch(int epoch);
    int epoch() const { return epoch_; }
    const std::vector<LossBreakdown>& history() const { return history_; }
    const TrainConfig& config() const { return config_; }
    const ObjectiveSpec& objective() const { return objective_; }
    OsrModel& model() { return model_; }

    /// Hex digest of the data-order and noise generator states.
    std::string rng_digest() const;

private:
    torch::Tensor draw_noise(std::int64_t batch);

    OsrModel model_;
    TrainConfig config_;
    ObjectiveSpec objective_;
    torch::optim::SGD optimizer_;
    torch::Generator noise_gen_;
    std::mt19937_64 order_rng_;
    int epoch_ = 0;
    std::int64_t iteration_ = 0;
    std::vector<LossBreakdown> history_;
};

} // namespace m2iosr
