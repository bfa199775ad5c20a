// Copyright the maskhash authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#include "maskhash/model.hpp"
#include "maskhash/error.hpp"
#include "maskhash/io.hpp"
#include "maskhash/rng.hpp"

#include <algorithm>
#include <cmath>

namespace maskhash {

namespace {

// out[r] = sum_c w[r*cols + c] * x[c] + b[r]
void affine(const std::vector<double>& w, const std::vector<double>& b,
            const double* x, uint32_t rows, uint32_t cols, double* out) {
    for (uint32_t r = 0; r < rows; ++r) {
        double acc = b[r];
        const double* row = w.data() + static_cast<size_t>(r) * cols;
        for (uint32_t c = 0; c < cols; ++c) {
            acc += row[c] * x[c];
        }
        out[r] = acc;
    }
}

void check_finite(const std::vector<double>& values, const char* layer) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw Error::numeric(std::string("non-finite value in ") + layer + " output");
        }
    }
}

} // namespace

void Architecture::validate() const {
    if (feature_dim == 0 || embed_dim == 0 || repr_dim == 0 || code_length == 0 ||
        num_classes == 0 || n_frames == 0) {
        throw Error::config("architecture dimensions must all be positive");
    }
    if (code_length > 512) {
        throw Error::config("code_length " + std::to_string(code_length) + " exceeds the supported maximum 512");
    }
    if (num_classes < 2) {
        throw Error::config("num_classes must be at least 2, got " + std::to_string(num_classes));
    }
}

std::vector<std::vector<double>*> ModelParams::tensors() {
    return {&fusion, &embed_w, &embed_b, &repr_w, &repr_b, &encode_w, &encode_b, &cls_w, &cls_b};
}

std::vector<const std::vector<double>*> ModelParams::tensors() const {
    return {&fusion, &embed_w, &embed_b, &repr_w, &repr_b, &encode_w, &encode_b, &cls_w, &cls_b};
}

ModelParams ModelParams::zeros_like(const Architecture& arch) {
    ModelParams p;
    p.arch = arch;
    p.fusion.assign(arch.n_frames, 0.0);
    p.embed_w.assign(static_cast<size_t>(arch.embed_dim) * arch.feature_dim, 0.0);
    p.embed_b.assign(arch.embed_dim, 0.0);
    p.repr_w.assign(static_cast<size_t>(arch.repr_dim) * arch.embed_dim, 0.0);
    p.repr_b.assign(arch.repr_dim, 0.0);
    p.encode_w.assign(static_cast<size_t>(arch.code_length) * arch.repr_dim, 0.0);
    p.encode_b.assign(arch.code_length, 0.0);
    p.cls_w.assign(static_cast<size_t>(arch.num_classes) * arch.code_length, 0.0);
    p.cls_b.assign(arch.num_classes, 0.0);
    return p;
}

ModelParams init_params(const Architecture& arch, uint64_t seed) {
    arch.validate();
    ModelParams p = ModelParams::zeros_like(arch);
    p.fusion.assign(arch.n_frames, 1.0 / static_cast<double>(arch.n_frames));

    Rng rng(seed);
    auto fill_uniform = [&](std::vector<double>& w, uint32_t fan_in, uint32_t fan_out) {
        const double bound = std::sqrt(6.0 / (static_cast<double>(fan_in) + fan_out));
        for (double& v : w) {
            v = rng.uniform(-bound, bound);
        }
    };
    fill_uniform(p.embed_w, arch.feature_dim, arch.embed_dim);
    fill_uniform(p.repr_w, arch.embed_dim, arch.repr_dim);
    fill_uniform(p.encode_w, arch.repr_dim, arch.code_length);
    fill_uniform(p.cls_w, arch.code_length, arch.num_classes);
    return p;
}

std::vector<double> fuse(const std::vector<double>& embeddings, uint32_t n, uint32_t h,
                         const std::vector<double>& weights) {
    if (embeddings.size() != static_cast<size_t>(n) * h || weights.size() != n) {
        throw Error::data("fuse shape mismatch");
    }
    std::vector<double> fused(h, 0.0);
    for (uint32_t i = 0; i < n; ++i) {
        const double w = weights[i];
        const double* row = embeddings.data() + static_cast<size_t>(i) * h;
        for (uint32_t j = 0; j < h; ++j) {
            fused[j] += w * row[j];
        }
    }
    return fused;
}

ForwardTrace forward(const ModelParams& params, const FrameSet& frame_set) {
    const Architecture& a = params.arch;
    if (frame_set.indices.size() != a.n_frames ||
        frame_set.features.size() != static_cast<size_t>(a.n_frames) * a.feature_dim) {
        throw Error::data("frame set shape does not match the architecture");
    }

    ForwardTrace t;
    t.frame_pre.resize(static_cast<size_t>(a.n_frames) * a.embed_dim);
    t.frame_embeds.resize(t.frame_pre.size());

    std::vector<double> x(a.feature_dim);
    for (uint32_t i = 0; i < a.n_frames; ++i) {
        const float* src = frame_set.features.data() + static_cast<size_t>(i) * a.feature_dim;
        std::copy(src, src + a.feature_dim, x.begin());
        double* pre = t.frame_pre.data() + static_cast<size_t>(i) * a.embed_dim;
        affine(params.embed_w, params.embed_b, x.data(), a.embed_dim, a.feature_dim, pre);
        double* post = t.frame_embeds.data() + static_cast<size_t>(i) * a.embed_dim;
        for (uint32_t j = 0; j < a.embed_dim; ++j) {
            post[j] = pre[j] > 0.0 ? pre[j] : 0.0;
        }
    }
    // Pre-activation; the ReLU maps NaN to 0 and would hide the corruption.
    check_finite(t.frame_pre, "embed");

    t.fused = fuse(t.frame_embeds, a.n_frames, a.embed_dim, params.fusion);
    check_finite(t.fused, "fusion");

    t.repr_pre.resize(a.repr_dim);
    affine(params.repr_w, params.repr_b, t.fused.data(), a.repr_dim, a.embed_dim, t.repr_pre.data());
    t.repr.resize(a.repr_dim);
    for (uint32_t j = 0; j < a.repr_dim; ++j) {
        t.repr[j] = t.repr_pre[j] > 0.0 ? t.repr_pre[j] : 0.0;
    }
    check_finite(t.repr_pre, "representation");

    std::vector<double> z(a.code_length);
    affine(params.encode_w, params.encode_b, t.repr.data(), a.code_length, a.repr_dim, z.data());
    t.ip.resize(a.code_length);
    for (uint32_t j = 0; j < a.code_length; ++j) {
        t.ip[j] = 1.0 / (1.0 + std::exp(-z[j]));
    }
    check_finite(t.ip, "encoding");

    t.logits.resize(a.num_classes);
    affine(params.cls_w, params.cls_b, t.ip.data(), a.num_classes, a.code_length, t.logits.data());
    check_finite(t.logits, "classifier");

    t.probs.resize(a.num_classes);
    const double max_logit = *std::max_element(t.logits.begin(), t.logits.end());
    double denom = 0.0;
    for (uint32_t k = 0; k < a.num_classes; ++k) {
        t.probs[k] = std::exp(t.logits[k] - max_logit);
        denom += t.probs[k];
    }
    for (double& p : t.probs) {
        p /= denom;
    }
    check_finite(t.probs, "softmax");
    return t;
}

uint32_t predict_class(const std::vector<double>& probs) {
    if (probs.empty()) {
        throw Error::data("predict_class called with an empty probability vector");
    }
    uint32_t best = 0;
    for (uint32_t k = 1; k < probs.size(); ++k) {
        if (probs[k] > probs[best]) {
            best = k;
        }
    }
    return best;
}

std::vector<uint8_t> binarize(const std::vector<double>& binary_like) {
    std::vector<uint8_t> bits(binary_like.size());
    for (size_t i = 0; i < binary_like.size(); ++i) {
        const double v = binary_like[i];
        if (!(v >= 0.0 && v <= 1.0)) {
            throw Error::data("binarize input " + std::to_string(v) + " outside [0, 1]");
        }
        bits[i] = v > 0.5 ? 1 : 0;
    }
    return bits;
}

void save_model(const ModelParams& params, const std::string& path) {
    BinaryWriter writer(path);
    writer.magic("MHM1");
    const Architecture& a = params.arch;
    writer.u32(a.feature_dim);
    writer.u32(a.embed_dim);
    writer.u32(a.repr_dim);
    writer.u32(a.code_length);
    writer.u32(a.num_classes);
    writer.u32(a.n_frames);
    for (const std::vector<double>* tensor : params.tensors()) {
        for (double v : *tensor) {
            writer.f32(static_cast<float>(v));
        }
    }
    writer.close();
}

ModelParams load_model(const std::string& path) {
    BinaryReader reader(path);
    reader.expect_magic("MHM1");
    Architecture a;
    a.feature_dim = reader.u32();
    a.embed_dim = reader.u32();
    a.repr_dim = reader.u32();
    a.code_length = reader.u32();
    a.num_classes = reader.u32();
    a.n_frames = reader.u32();
    a.validate();

    ModelParams params = ModelParams::zeros_like(a);
    for (std::vector<double>* tensor : params.tensors()) {
        for (double& v : *tensor) {
            v = static_cast<double>(reader.f32());
        }
    }
    reader.expect_eof();
    for (const std::vector<double>* tensor : params.tensors()) {
        for (double v : *tensor) {
            if (!std::isfinite(v)) {
                throw Error::data("'" + path + "' contains non-finite parameters");
            }
        }
    }
    return params;
}

} // namespace maskhash
