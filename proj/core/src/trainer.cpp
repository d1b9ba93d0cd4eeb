#include "m2iosr/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>

#include <ATen/CPUGeneratorImpl.h>

#include "m2iosr/errors.hpp"

namespace m2iosr {

void TrainConfig::validate() const {
    local.validate();
    if (beta1 < 0 || beta2 < 0 || gamma < 0) throw ConfigError("loss weights beta1, beta2, gamma must be >= 0");
    if (!(lr > 0)) throw ConfigError("lr must be > 0");
    if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must be in [0, 1)");
    if (lr_decay_every < 1) throw ConfigError("lr_decay_every must be >= 1");
    if (!(lr_decay_factor > 0)) throw ConfigError("lr_decay_factor must be > 0");
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
}

double lr_at_epoch(const TrainConfig& config, int epoch) {
    return config.lr * std::pow(config.lr_decay_factor, epoch / config.lr_decay_every);
}

const std::vector<std::string>& LossBreakdown::field_names() {
    static const std::vector<std::string> names{"l_global", "l_1t16",         "l_1t4", "l_4t4", "l_local",
                                                "l_kl",     "l_recon", "l_maxmin_total", "l_ce", "total"};
    return names;
}

std::vector<double> LossBreakdown::values() const {
    return {l_global, l_1t16, l_1t4, l_4t4, l_local, l_kl, l_recon, l_maxmin_total, l_ce, total};
}

MaxminTerms maxmin_objective(OsrModel& model, const torch::Tensor& images, const torch::Tensor& labels,
                             const torch::Tensor& eps, const TrainConfig& config, const ObjectiveSpec& objective) {
    auto taps = model->encoder->forward(images);
    auto z = reparameterize(taps.stats, eps);
    auto zero = torch::zeros({}, taps.stats.mu.options());

    MaxminTerms t;
    t.l_global = objective.global_mi ? global_mi(taps.f16, z, model->heads->global_disc, objective.terms) : zero;
    t.l_1t16 = objective.local_1t16 ? model->heads->local_term(PairKind::L1t16, taps, z, objective.terms) : zero;
    t.l_1t4 = objective.local_1t4 ? model->heads->local_term(PairKind::L1t4, taps, z, objective.terms) : zero;
    t.l_4t4 = objective.local_4t4 ? model->heads->local_term(PairKind::L4t4, taps, z, objective.terms) : zero;
    t.l_local = local_mi_loss(t.l_1t16, t.l_1t4, t.l_4t4, config.local);
    t.l_kl = objective.kl ? kl_loss(taps.stats, labels, model->centers) : zero;
    if (objective.reconstruction) {
        if (!model->has_decoder()) throw ConfigError("reconstruction objective needs a decoder");
        t.l_recon = (model->decoder->forward(z) - images).square().mean();
    } else {
        t.l_recon = zero;
    }
    t.total = -(config.beta1 * t.l_global + config.beta2 * t.l_local) + config.gamma * t.l_kl + t.l_recon;
    return t;
}

torch::Tensor classification_objective(OsrModel& model, const torch::Tensor& images, const torch::Tensor& labels,
                                       const torch::Tensor& eps) {
    auto taps = model->encoder->forward(images);
    auto z = reparameterize(taps.stats, eps);
    return torch::nn::functional::cross_entropy(model->classifier->forward(z), labels);
}

namespace {

double checked(const torch::Tensor& t, const char* name, int epoch, std::int64_t iteration) {
    double v = t.item<double>();
    if (!std::isfinite(v)) {
        throw NumericError(std::string("non-finite ") + name + " at epoch " + std::to_string(epoch) + " iteration " +
                           std::to_string(iteration));
    }
    return v;
}

void fill(LossBreakdown& b, const MaxminTerms& t, int epoch, std::int64_t iteration) {
    b.l_global = checked(t.l_global, "l_global", epoch, iteration);
    b.l_1t16 = checked(t.l_1t16, "l_1t16", epoch, iteration);
    b.l_1t4 = checked(t.l_1t4, "l_1t4", epoch, iteration);
    b.l_4t4 = checked(t.l_4t4, "l_4t4", epoch, iteration);
    b.l_local = checked(t.l_local, "l_local", epoch, iteration);
    b.l_kl = checked(t.l_kl, "l_kl", epoch, iteration);
    b.l_recon = checked(t.l_recon, "l_recon", epoch, iteration);
    b.l_maxmin_total = checked(t.total, "l_maxmin_total", epoch, iteration);
}

torch::Dtype model_dtype(OsrModel& model) {
    return torch::typeMetaToScalarType(model->parameters().front().dtype());
}

} // namespace

Trainer::Trainer(OsrModel model, TrainConfig config, ObjectiveSpec objective)
    : model_(std::move(model)),
      config_((config.validate(), config)),
      objective_(objective),
      optimizer_(model_->parameters(), torch::optim::SGDOptions(config.lr).momentum(config.momentum)),
      noise_gen_(at::make_generator<at::CPUGeneratorImpl>(config.seed)),
      order_rng_(config.seed) {
    set_epoch(0);
}

void Trainer::set_epoch(int epoch) {
    epoch_ = epoch;
    const double lr = lr_at_epoch(config_, epoch);
    for (auto& group : optimizer_.param_groups()) {
        static_cast<torch::optim::SGDOptions&>(group.options()).lr(lr);
    }
}

torch::Tensor Trainer::draw_noise(std::int64_t batch) {
    auto opts = torch::TensorOptions().dtype(model_dtype(model_));
    return torch::randn({batch, model_->config().latent_dim}, noise_gen_, opts);
}

LossBreakdown Trainer::maxmin_step(const torch::Tensor& images, const torch::Tensor& labels) {
    model_->train();
    LossBreakdown b;
    b.epoch = epoch_;
    b.iteration = iteration_;
    auto terms = maxmin_objective(model_, images, labels, draw_noise(images.size(0)), config_, objective_);
    fill(b, terms, epoch_, iteration_);
    optimizer_.zero_grad();
    terms.total.backward();
    optimizer_.step();
    return b;
}

double Trainer::classification_step(const torch::Tensor& images, const torch::Tensor& labels) {
    model_->train();
    auto ce = classification_objective(model_, images, labels, draw_noise(images.size(0)));
    double value = checked(ce, "l_ce", epoch_, iteration_);
    optimizer_.zero_grad();
    ce.backward();
    optimizer_.step();
    return value;
}

LossBreakdown Trainer::measure(const torch::Tensor& images, const torch::Tensor& labels, const torch::Tensor& eps) {
    model_->train();
    torch::NoGradGuard guard;
    LossBreakdown b;
    b.epoch = epoch_;
    b.iteration = iteration_;
    if (objective_.has_maxmin()) {
        fill(b, maxmin_objective(model_, images, labels, eps, config_, objective_), epoch_, iteration_);
    }
    b.l_ce = checked(classification_objective(model_, images, labels, eps), "l_ce", epoch_, iteration_);
    b.total = b.l_maxmin_total + b.l_ce;
    return b;
}

const std::vector<LossBreakdown>& Trainer::train(const ImageBatch& data, std::ostream* progress,
                                                 const EpochCallback& on_epoch_end) {
    if (!data.labeled()) throw ConfigError("training data must be labeled");
    const auto n = static_cast<std::int64_t>(data.size());
    if (n < 2) throw ConfigError("training needs at least 2 samples");
    const auto all_images = to_tensor(data, model_dtype(model_));
    const auto all_labels = labels_tensor(data);

    std::vector<std::int64_t> order(n);
    for (int e = epoch_; e < config_.epochs; ++e) {
        set_epoch(e);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), order_rng_);

        std::vector<double> sum(LossBreakdown::field_names().size(), 0.0);
        int batches = 0;
        for (std::int64_t start = 0; start + 2 <= n; start += config_.batch_size) {
            const auto end = std::min<std::int64_t>(start + config_.batch_size, n);
            auto idx = torch::tensor(std::vector<std::int64_t>(order.begin() + start, order.begin() + end));
            auto images = all_images.index_select(0, idx);
            auto labels = all_labels.index_select(0, idx);

            LossBreakdown b;
            if (objective_.has_maxmin()) {
                b = maxmin_step(images, labels);
            } else {
                b.epoch = epoch_;
                b.iteration = iteration_;
            }
            b.l_ce = classification_step(images, labels);
            b.total = b.l_maxmin_total + b.l_ce;
            history_.push_back(b);
            ++iteration_;

            auto v = b.values();
            for (std::size_t k = 0; k < v.size(); ++k) sum[k] += v[k];
            ++batches;
        }
        if (progress && batches > 0) {
            char line[256];
            std::snprintf(line, sizeof(line),
                          "epoch %d lr %.6g  maxmin %.5f  global %.5f  local %.5f  kl %.5f  ce %.5f\n", e,
                          lr_at_epoch(config_, e), sum[7] / batches, sum[0] / batches, sum[4] / batches,
                          sum[5] / batches, sum[8] / batches);
            *progress << line << std::flush;
        }
        epoch_ = e + 1;
        if (on_epoch_end) on_epoch_end(e, *this);
    }
    return history_;
}

std::string Trainer::rng_digest() const {
    std::ostringstream state;
    state << order_rng_;
    auto gen_state = noise_gen_.get_state();
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](unsigned char c) {
        h ^= c;
        h *= 1099511628211ULL;
    };
    for (unsigned char c : state.str()) mix(c);
    const auto* bytes = gen_state.data_ptr<std::uint8_t>();
    for (std::int64_t i = 0; i < gen_state.numel(); ++i) mix(bytes[i]);
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace m2iosr
