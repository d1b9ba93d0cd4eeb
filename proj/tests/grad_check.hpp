#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "m2iosr/model.hpp"

namespace test_support {

struct GroupGradError {
    std::string group;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

inline double rel_error(double a, double n) {
    const double scale = std::max({std::abs(a), std::abs(n), 1e-7});
    return std::abs(a - n) / scale;
}

/// Central finite differences of `loss` along random unit directions, one
/// direction per parameter group, plus optionally the coordinate with the
/// largest gradient in each group.
/// Only groups that receive a nonzero gradient are reported. The model
/// parameters are restored afterwards.
inline std::vector<GroupGradError> check_group_gradients(m2iosr::OsrModel& model,
                                                         const std::function<torch::Tensor()>& loss, double eps,
                                                         bool max_coordinate, std::uint64_t seed) {
    std::map<std::string, std::vector<torch::Tensor>> groups;
    for (const auto& p : model->named_parameters()) {
        groups[m2iosr::OsrModelImpl::group_of(p.key())].push_back(p.value());
    }

    model->zero_grad();
    loss().backward();

    torch::Generator gen = at::detail::createCPUGenerator(seed);
    std::vector<GroupGradError> out;
    auto eval = [&] {
        torch::NoGradGuard guard;
        return loss().item<double>();
    };
    auto shift = [](std::vector<torch::Tensor>& params, const std::vector<torch::Tensor>& dir, double step) {
        torch::NoGradGuard guard;
        for (std::size_t i = 0; i < params.size(); ++i) params[i].add_(dir[i], step);
    };

    for (auto& [name, params] : groups) {
        bool has_grad = false;
        for (auto& p : params) has_grad = has_grad || (p.grad().defined() && p.grad().abs().max().item<double>() > 0);
        if (!has_grad) continue;

        auto directional = [&](const std::vector<torch::Tensor>& dir) {
            double analytic = 0.0;
            for (std::size_t i = 0; i < params.size(); ++i) {
                if (params[i].grad().defined()) analytic += (params[i].grad() * dir[i]).sum().item<double>();
            }
            shift(params, dir, eps);
            const double up = eval();
            shift(params, dir, -2.0 * eps);
            const double down = eval();
            shift(params, dir, eps);
            return GroupGradError{name, analytic, (up - down) / (2.0 * eps), 0.0};
        };

        std::vector<torch::Tensor> dir;
        double norm2 = 0.0;
        for (auto& p : params) {
            dir.push_back(torch::randn(p.sizes(), gen, p.options()));
            norm2 += dir.back().square().sum().item<double>();
        }
        for (auto& d : dir) d.div_(std::sqrt(norm2));
        auto e = directional(dir);
        e.rel_error = rel_error(e.analytic, e.numeric);
        out.push_back(e);

        // the largest-gradient coordinate, where a single-entry comparison is most informative
        if (max_coordinate) {
            std::size_t best_t = 0;
            std::int64_t best_i = 0;
            double best = -1.0;
            for (std::size_t t = 0; t < params.size(); ++t) {
                if (!params[t].grad().defined()) continue;
                auto g = params[t].grad().flatten().abs();
                const auto idx = g.argmax().item<std::int64_t>();
                if (g[idx].item<double>() > best) {
                    best = g[idx].item<double>();
                    best_t = t;
                    best_i = idx;
                }
            }
            std::vector<torch::Tensor> unit;
            for (auto& p : params) unit.push_back(torch::zeros_like(p));
            unit[best_t].view(-1)[best_i] = 1.0;
            auto ce = directional(unit);
            ce.group = name + "[max]";
            ce.rel_error = rel_error(ce.analytic, ce.numeric);
            out.push_back(ce);
        }
    }
    return out;
}

} // namespace test_support
