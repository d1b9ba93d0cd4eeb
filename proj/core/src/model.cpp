#include "m2iosr/model.hpp"

#include <algorithm>

namespace nn = torch::nn;

namespace m2iosr {

DecoderImpl::DecoderImpl(const EncoderConfig& c)
    : c4_(c.tap4_channels()), h4_(c.tap4_height()), w4_(c.tap4_width()) {
    const auto& w = c.stage_widths;
    auto up = [](std::int64_t in, std::int64_t out) {
        return nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1));
    };
    fc_ = register_module("fc", nn::Linear(c.latent_dim, c4_ * h4_ * w4_));
    up_ = register_module("up", nn::Sequential(up(c4_, w[2]), nn::ReLU(), up(w[2], w[1]), nn::ReLU(),
                                               up(w[1], c.input.channels)));
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& z) {
    auto x = torch::relu(fc_->forward(z)).view({z.size(0), c4_, h4_, w4_});
    return up_->forward(x);
}

void DecoderImpl::zero_init() {
    torch::NoGradGuard guard;
    for (auto& p : parameters()) p.zero_();
}

OsrModelImpl::OsrModelImpl(const EncoderConfig& config, bool with_decoder) : config_(config) {
    config_.validate();
    encoder = register_module("encoder", Encoder(config_));
    classifier = register_module("classifier",
                                 Classifier(config_.latent_dim, config_.num_known, config_.classifier_hidden));
    heads = register_module("heads", MIHeads(config_));
    centers = register_module("centers", ClassCenterMap(config_.num_known, config_.latent_dim));
    if (with_decoder) {
        decoder = register_module("decoder", Decoder(config_));
    }
}

std::string OsrModelImpl::group_of(const std::string& name) {
    std::string rest = name;
    if (rest.rfind("heads.", 0) == 0) rest = rest.substr(6);
    return rest.substr(0, rest.find('.'));
}

std::vector<std::string> OsrModelImpl::parameter_groups() const {
    std::vector<std::string> groups;
    for (const auto& item : named_parameters()) {
        auto g = group_of(item.key());
        if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
    }
    return groups;
}

OsrModel make_model(const EncoderConfig& config, std::uint64_t seed, bool with_decoder) {
    torch::manual_seed(seed);
    return OsrModel(config, with_decoder);
}

} // namespace m2iosr
