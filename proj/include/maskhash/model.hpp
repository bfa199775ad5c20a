// Copyright the maskhash authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#pragma once

#include "maskhash/dataset.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace maskhash {

struct Architecture {
    uint32_t feature_dim = 0;  // D
    uint32_t embed_dim = 0;    // H
    uint32_t repr_dim = 0;     // R
    uint32_t code_length = 0;  // L
    uint32_t num_classes = 0;  // K
    uint32_t n_frames = 0;     // N

    void validate() const;
    bool operator==(const Architecture&) const = default;
};

// All parameters are doubles; gradient checking against central finite
// differences needs the headroom. Checkpoints store float32.
struct ModelParams {
    Architecture arch;
    std::vector<double> fusion;                 // N
    std::vector<double> embed_w, embed_b;       // H x D, H
    std::vector<double> repr_w, repr_b;         // R x H, R
    std::vector<double> encode_w, encode_b;     // L x R, L
    std::vector<double> cls_w, cls_b;           // K x L, K

    // Tensors in declaration order; drives serialization, the optimizer, and
    // the gradient checker, so all three agree on parameter order.
    std::vector<std::vector<double>*> tensors();
    std::vector<const std::vector<double>*> tensors() const;

    static ModelParams zeros_like(const Architecture& arch);
};

struct ForwardTrace {
    std::vector<double> frame_pre;     // N x H, pre-activation
    std::vector<double> frame_embeds;  // N x H, post-ReLU
    std::vector<double> fused;         // H
    std::vector<double> repr_pre;      // R
    std::vector<double> repr;          // R, post-ReLU
    std::vector<double> ip;            // L, sigmoid outputs in (0,1)
    std::vector<double> logits;        // K
    std::vector<double> probs;         // K, sums to 1
};

ModelParams init_params(const Architecture& arch, uint64_t seed);

// Weighted sum of per-frame embeddings; weights are unconstrained.
std::vector<double> fuse(const std::vector<double>& embeddings, uint32_t n, uint32_t h,
                         const std::vector<double>& weights);

ForwardTrace forward(const ModelParams& params, const FrameSet& frame_set);

uint32_t predict_class(const std::vector<double>& probs);

// bit = 1 iff value > 0.5; exactly 0.5 maps to 0.
std::vector<uint8_t> binarize(const std::vector<double>& binary_like);

void save_model(const ModelParams& params, const std::string& path);
ModelParams load_model(const std::string& path);

} // namespace maskhash
