#include "m2iosr/mi_objectives.hpp"

#include <cmath>

#include "m2iosr/errors.hpp"

namespace nn = torch::nn;

namespace m2iosr {

double softplus(double s) { return std::max(s, 0.0) + std::log1p(std::exp(-std::abs(s))); }

torch::Tensor softplus(const torch::Tensor& s) { return torch::relu(s) + torch::log1p(torch::exp(-s.abs())); }

std::string to_string(PairTerms terms) {
    switch (terms) {
    case PairTerms::Both: return "both";
    case PairTerms::PositiveOnly: return "positive";
    case PairTerms::NegativeOnly: return "negative";
    }
    return "?";
}

torch::Tensor jsd_objective(const torch::Tensor& pos_scores, const torch::Tensor& neg_scores, PairTerms terms) {
    if (pos_scores.numel() == 0 || neg_scores.numel() == 0) {
        throw ConfigError("jsd_objective needs non-empty score sets");
    }
    require_finite(pos_scores, "positive discriminator scores");
    require_finite(neg_scores, "negative discriminator scores");
    auto value = torch::zeros({}, pos_scores.options());
    if (terms != PairTerms::NegativeOnly) {
        value = value - m2iosr::softplus(-pos_scores).mean();
    }
    if (terms != PairTerms::PositiveOnly) {
        value = value - m2iosr::softplus(neg_scores).mean();
    }
    return value;
}

double jsd_objective(std::span<const double> pos_scores, std::span<const double> neg_scores) {
    if (pos_scores.empty() || neg_scores.empty()) {
        throw ConfigError("jsd_objective needs non-empty score sets");
    }
    double pos = 0.0;
    for (double s : pos_scores) {
        if (!std::isfinite(s)) throw NumericError("non-finite positive discriminator score");
        pos -= softplus(-s);
    }
    double neg = 0.0;
    for (double s : neg_scores) {
        if (!std::isfinite(s)) throw NumericError("non-finite negative discriminator score");
        neg -= softplus(s);
    }
    return pos / pos_scores.size() + neg / neg_scores.size();
}

std::vector<std::int64_t> negative_pairing(std::int64_t batch) {
    if (batch < 2) {
        throw ConfigError("negative pairing requires batch >= 2");
    }
    std::vector<std::int64_t> idx(batch);
    for (std::int64_t i = 0; i < batch; ++i) idx[i] = (i + 1) % batch;
    return idx;
}

torch::Tensor make_negative_pairing(const torch::Tensor& features) {
    auto idx = negative_pairing(features.size(0));
    return features.index_select(0, torch::tensor(idx, torch::kInt64));
}

GlobalDiscriminatorImpl::GlobalDiscriminatorImpl(std::int64_t map_channels, std::int64_t map_h, std::int64_t map_w,
                                                 std::int64_t latent_dim, std::int64_t adapter_channels,
                                                 std::int64_t hidden)
    : flat_dim_(adapter_channels * map_h * map_w) {
    adapter_ = nn::Sequential(nn::Conv2d(nn::Conv2dOptions(map_channels, adapter_channels, 3).padding(1)), nn::ReLU(),
                              nn::Conv2d(nn::Conv2dOptions(adapter_channels, adapter_channels, 3).padding(1)));
    scorer_ = nn::Sequential(nn::Linear(flat_dim_ + latent_dim, hidden), nn::ReLU(), nn::Linear(hidden, hidden),
                             nn::ReLU(), nn::Linear(hidden, 1));
    register_module("adapter", adapter_);
    register_module("scorer", scorer_);
}

torch::Tensor GlobalDiscriminatorImpl::adapt(const torch::Tensor& f16) { return adapter_->forward(f16).flatten(1); }

torch::Tensor GlobalDiscriminatorImpl::score(const torch::Tensor& adapted, const torch::Tensor& z) {
    if (adapted.size(1) != flat_dim_ || adapted.size(0) != z.size(0)) {
        throw ConfigError("global discriminator input shape mismatch");
    }
    return scorer_->forward(torch::cat({adapted, z}, 1)).squeeze(1);
}

void GlobalDiscriminatorImpl::zero_output_layer() {
    torch::NoGradGuard guard;
    auto last = scorer_[scorer_->size() - 1]->as<nn::Linear>();
    last->weight.zero_();
    last->bias.zero_();
}

LocalDiscriminatorImpl::LocalDiscriminatorImpl(std::int64_t map_channels, std::int64_t summary_dim,
                                               std::int64_t hidden) {
    net_ = nn::Sequential(nn::Conv2d(nn::Conv2dOptions(map_channels + summary_dim, hidden, 1)), nn::ReLU(),
                          nn::Conv2d(nn::Conv2dOptions(hidden, hidden, 1)), nn::ReLU(),
                          nn::Conv2d(nn::Conv2dOptions(hidden, 1, 1)));
    register_module("net", net_);
}

torch::Tensor LocalDiscriminatorImpl::forward(const torch::Tensor& map, const torch::Tensor& summary) {
    if (map.dim() != 4 || summary.dim() != 2 || map.size(0) != summary.size(0)) {
        throw ConfigError("local discriminator expects (batch, C, h, w) map and (batch, J) summary");
    }
    auto tiled = summary.unsqueeze(2).unsqueeze(3).expand({-1, -1, map.size(2), map.size(3)});
    return net_->forward(torch::cat({map, tiled}, 1)).squeeze(1);
}

void LocalDiscriminatorImpl::zero_output_layer() {
    torch::NoGradGuard guard;
    auto last = net_[net_->size() - 1]->as<nn::Conv2d>();
    last->weight.zero_();
    last->bias.zero_();
}

std::string to_string(PairKind kind) {
    switch (kind) {
    case PairKind::L1t16: return "1t16";
    case PairKind::L1t4: return "1t4";
    case PairKind::L4t4: return "4t4";
    }
    return "?";
}

PairKind pair_kind_from_string(const std::string& name) {
    if (name == "1t16") return PairKind::L1t16;
    if (name == "1t4") return PairKind::L1t4;
    if (name == "4t4") return PairKind::L4t4;
    throw ConfigError("unknown pair kind '" + name + "'");
}

torch::Tensor global_mi(const torch::Tensor& f16, const torch::Tensor& z, GlobalDiscriminator& disc,
                        PairTerms terms) {
    // The adapter is per-sample, so shifting its output equals adapting the shifted map.
    auto adapted = disc->adapt(f16);
    auto pos = disc->score(adapted, z);
    auto neg = disc->score(make_negative_pairing(adapted), z);
    return jsd_objective(pos, neg, terms);
}

torch::Tensor local_mi(const torch::Tensor& map, const torch::Tensor& summary, LocalDiscriminator& disc,
                       PairTerms terms) {
    auto pos = disc->forward(map, summary);
    auto neg = disc->forward(make_negative_pairing(map), summary);
    return jsd_objective(pos, neg, terms);
}

void LocalWeights::validate() const {
    if (a1 < 0 || a2 < 0 || a3 < 0) {
        throw ConfigError("local MI weights must be non-negative");
    }
    if (std::abs(a1 + a2 + a3 - 1.0) > 1e-9) {
        throw ConfigError("local MI weights a1+a2+a3 must equal 1, got " + std::to_string(a1 + a2 + a3));
    }
}

double local_mi_loss(double l_1t16, double l_1t4, double l_4t4, const LocalWeights& w) {
    w.validate();
    return w.a1 * l_1t16 + w.a2 * l_1t4 + w.a3 * l_4t4;
}

torch::Tensor local_mi_loss(const torch::Tensor& l_1t16, const torch::Tensor& l_1t4, const torch::Tensor& l_4t4,
                            const LocalWeights& w) {
    w.validate();
    return w.a1 * l_1t16 + w.a2 * l_1t4 + w.a3 * l_4t4;
}

MIHeadsImpl::MIHeadsImpl(const EncoderConfig& c) {
    const auto j = c.latent_dim;
    global_disc = register_module(
        "global_disc", GlobalDiscriminator(c.tap16_channels(), c.tap16_height(), c.tap16_width(), j,
                                           c.adapter_channels, c.disc_hidden));
    local_1t16 = register_module("local_1t16", LocalDiscriminator(c.tap16_channels(), j, c.disc_hidden));
    local_1t4 = register_module("local_1t4", LocalDiscriminator(c.tap4_channels(), j, c.disc_hidden));
    local_4t4 = register_module("local_4t4", LocalDiscriminator(c.tap4_channels(), j, c.disc_hidden));
    proj_4t4 = register_module("proj_4t4", nn::Linear(c.tap4_channels(), j));
}

torch::Tensor MIHeadsImpl::summarize_f4(const torch::Tensor& f4) { return proj_4t4->forward(f4.mean({2, 3})); }

torch::Tensor MIHeadsImpl::local_term(PairKind kind, const FeatureTaps& taps, const torch::Tensor& z,
                                      PairTerms terms) {
    switch (kind) {
    case PairKind::L1t16: return local_mi(taps.f16, z, local_1t16, terms);
    case PairKind::L1t4: return local_mi(taps.f4, z, local_1t4, terms);
    case PairKind::L4t4: return local_mi(taps.f4, summarize_f4(taps.f4), local_4t4, terms);
    }
    throw ConfigError("unknown pair kind");
}

MITerms MIHeadsImpl::compute(const FeatureTaps& taps, const torch::Tensor& z, PairTerms terms) {
    MITerms t;
    t.l_global = global_mi(taps.f16, z, global_disc, terms);
    t.l_1t16 = local_term(PairKind::L1t16, taps, z, terms);
    t.l_1t4 = local_term(PairKind::L1t4, taps, z, terms);
    t.l_4t4 = local_term(PairKind::L4t4, taps, z, terms);
    return t;
}

} // namespace m2iosr
