// Copyright the maskhash authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#pragma once

#include "maskhash/dataset.hpp"
#include "maskhash/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace maskhash {

struct TrainConfig {
    double alpha = 1.0;
    double beta = 1.0;
    double margin = 2.0;
    double learning_rate = 1e-3;
    uint32_t batch_size = 16;
    uint32_t iterations = 1;
    uint64_t seed = 0;
    std::string optimizer = "adam(0.9,0.999,1e-8)";

    void validate() const;
};

struct LossBreakdown {
    double total = 0.0;
    double inter = 0.0;
    double intra = 0.0;
};

struct TrainResult {
    ModelParams params;
    std::vector<LossBreakdown> history; // one entry per iteration, batch means
};

// -log(probs[label]) with the probability clamped at 1e-12.
double classification_loss(const std::vector<double>& probs, uint32_t label);

// max(squared Euclidean distance - margin, 0).
double intra_pair_loss(const std::vector<double>& ip1, const std::vector<double>& ip2, double margin);

// Classification term is the mean over the pair's two frame sets; the pair
// shares one label. total = alpha * inter + beta * intra.
LossBreakdown total_loss(const ModelParams& params, const IntraPair& pair, const TrainConfig& config);

// Reverse-mode gradients of total_loss for every parameter tensor. Where the
// margin hinge is inactive (distance^2 <= margin) the intra contribution is
// exactly zero; ReLU uses subgradient 0 at the kink.
ModelParams backward(const ModelParams& params, const IntraPair& pair, const TrainConfig& config,
                     LossBreakdown* loss_out = nullptr);

// Central finite differences over every parameter; returns the maximum
// relative error |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
// Coordinates whose two probes land on different sides of a ReLU, hinge, or
// clamp kink are skipped: the loss is continuous but not differentiable
// there, so the quotient estimates no derivative.
double grad_check(ModelParams params, const IntraPair& pair, const TrainConfig& config, double epsilon = 1e-4);

// Runs grad_check on `instances` freshly initialized models with synthetic
// gaussian frame pairs; returns the worst relative error seen.
double grad_check_random(const Architecture& arch, const TrainConfig& config, uint64_t seed,
                         uint32_t instances, double epsilon = 1e-4);

TrainResult train(const Dataset& dataset, const Architecture& arch, const TrainConfig& config);

void save_loss_history(const std::vector<LossBreakdown>& history, const std::string& path);

} // namespace maskhash
