// Copyright the maskhash authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#include "maskhash/training.hpp"
#include "maskhash/error.hpp"
#include "maskhash/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <utility>

namespace maskhash {

namespace {

constexpr double prob_floor = 1e-12;

struct OptimizerSpec {
    enum class Kind { sgd, sgd_momentum, adam };
    Kind kind = Kind::adam;
    double mu = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

std::vector<double> parse_args(const std::string& text, const std::string& full) {
    std::vector<double> args;
    size_t start = 0;
    while (start <= text.size()) {
        size_t comma = text.find(',', start);
        if (comma == std::string::npos) {
            comma = text.size();
        }
        const std::string token = text.substr(start, comma - start);
        try {
            size_t used = 0;
            args.push_back(std::stod(token, &used));
            if (used != token.size()) {
                throw std::invalid_argument(token);
            }
        } catch (const std::exception&) {
            throw Error::config("invalid optimizer argument '" + token + "' in '" + full + "'");
        }
        start = comma + 1;
        if (comma == text.size()) {
            break;
        }
    }
    return args;
}

OptimizerSpec parse_optimizer(const std::string& text) {
    OptimizerSpec spec;
    std::string name = text;
    std::vector<double> args;
    const size_t open = text.find('(');
    if (open != std::string::npos) {
        if (text.back() != ')') {
            throw Error::config("malformed optimizer '" + text + "', expected closing ')'");
        }
        name = text.substr(0, open);
        const std::string inner = text.substr(open + 1, text.size() - open - 2);
        if (!inner.empty()) {
            args = parse_args(inner, text);
        }
    }
    if (name == "sgd") {
        spec.kind = OptimizerSpec::Kind::sgd;
        if (!args.empty()) {
            throw Error::config("optimizer sgd takes no arguments");
        }
    } else if (name == "sgd_momentum") {
        spec.kind = OptimizerSpec::Kind::sgd_momentum;
        if (args.size() > 1) {
            throw Error::config("optimizer sgd_momentum takes one argument");
        }
        if (args.size() == 1) {
            spec.mu = args[0];
        }
        if (!(spec.mu >= 0.0 && spec.mu < 1.0)) {
            throw Error::config("sgd_momentum coefficient must be in [0, 1)");
        }
    } else if (name == "adam") {
        spec.kind = OptimizerSpec::Kind::adam;
        if (!args.empty() && args.size() != 3) {
            throw Error::config("optimizer adam takes three arguments (beta1, beta2, eps)");
        }
        if (args.size() == 3) {
            spec.beta1 = args[0];
            spec.beta2 = args[1];
            spec.eps = args[2];
        }
        if (!(spec.beta1 >= 0.0 && spec.beta1 < 1.0 && spec.beta2 >= 0.0 && spec.beta2 < 1.0 && spec.eps > 0.0)) {
            throw Error::config("adam requires beta1, beta2 in [0, 1) and eps > 0");
        }
    } else {
        throw Error::config("unknown optimizer '" + text + "'");
    }
    return spec;
}

class Optimizer {
public:
    Optimizer(const OptimizerSpec& spec, const Architecture& arch)
        : _spec(spec), _m(ModelParams::zeros_like(arch)), _v(ModelParams::zeros_like(arch)) {}

    void step(ModelParams& params, const ModelParams& grads, double lr) {
        ++_t;
        auto p_tensors = params.tensors();
        auto g_tensors = grads.tensors();
        auto m_tensors = _m.tensors();
        auto v_tensors = _v.tensors();
        for (size_t t = 0; t < p_tensors.size(); ++t) {
            std::vector<double>& p = *p_tensors[t];
            const std::vector<double>& g = *g_tensors[t];
            std::vector<double>& m = *m_tensors[t];
            std::vector<double>& v = *v_tensors[t];
            switch (_spec.kind) {
            case OptimizerSpec::Kind::sgd:
                for (size_t i = 0; i < p.size(); ++i) {
                    p[i] -= lr * g[i];
                }
                break;
            case OptimizerSpec::Kind::sgd_momentum:
                for (size_t i = 0; i < p.size(); ++i) {
                    m[i] = _spec.mu * m[i] + g[i];
                    p[i] -= lr * m[i];
                }
                break;
            case OptimizerSpec::Kind::adam: {
                const double corr1 = 1.0 - std::pow(_spec.beta1, static_cast<double>(_t));
                const double corr2 = 1.0 - std::pow(_spec.beta2, static_cast<double>(_t));
                for (size_t i = 0; i < p.size(); ++i) {
                    m[i] = _spec.beta1 * m[i] + (1.0 - _spec.beta1) * g[i];
                    v[i] = _spec.beta2 * v[i] + (1.0 - _spec.beta2) * g[i] * g[i];
                    const double m_hat = m[i] / corr1;
                    const double v_hat = v[i] / corr2;
                    p[i] -= lr * m_hat / (std::sqrt(v_hat) + _spec.eps);
                }
                break;
            }
            }
        }
    }

private:
    OptimizerSpec _spec;
    uint64_t _t = 0;
    ModelParams _m;
    ModelParams _v;
};

// d(loss)/d(logits) for one trace; zero when the clamp absorbed the gradient.
std::vector<double> ce_logit_grad(const ForwardTrace& trace, uint32_t label, double weight) {
    std::vector<double> d(trace.probs.size(), 0.0);
    if (trace.probs[label] < prob_floor) {
        return d;
    }
    for (size_t k = 0; k < trace.probs.size(); ++k) {
        d[k] = weight * trace.probs[k];
    }
    d[label] -= weight;
    return d;
}

// Accumulates one trace's contribution through classifier, encoder,
// representation, fusion, and embedding layers.
void backprop_trace(const ModelParams& params, const FrameSet& frame_set, const ForwardTrace& trace,
                    const std::vector<double>& dlogits, const std::vector<double>& dip_extra,
                    ModelParams& grads) {
    const Architecture& a = params.arch;

    std::vector<double> dip(a.code_length, 0.0);
    for (uint32_t k = 0; k < a.num_classes; ++k) {
        const double dk = dlogits[k];
        grads.cls_b[k] += dk;
        if (dk == 0.0) {
            continue;
        }
        const double* w_row = params.cls_w.data() + static_cast<size_t>(k) * a.code_length;
        double* g_row = grads.cls_w.data() + static_cast<size_t>(k) * a.code_length;
        for (uint32_t j = 0; j < a.code_length; ++j) {
            g_row[j] += dk * trace.ip[j];
            dip[j] += dk * w_row[j];
        }
    }
    for (uint32_t j = 0; j < a.code_length; ++j) {
        dip[j] += dip_extra[j];
    }

    std::vector<double> dz(a.code_length);
    for (uint32_t j = 0; j < a.code_length; ++j) {
        dz[j] = dip[j] * trace.ip[j] * (1.0 - trace.ip[j]);
    }

    std::vector<double> drepr(a.repr_dim, 0.0);
    for (uint32_t j = 0; j < a.code_length; ++j) {
        const double dj = dz[j];
        grads.encode_b[j] += dj;
        const double* w_row = params.encode_w.data() + static_cast<size_t>(j) * a.repr_dim;
        double* g_row = grads.encode_w.data() + static_cast<size_t>(j) * a.repr_dim;
        for (uint32_t r = 0; r < a.repr_dim; ++r) {
            g_row[r] += dj * trace.repr[r];
            drepr[r] += dj * w_row[r];
        }
    }

    std::vector<double> dfused(a.embed_dim, 0.0);
    for (uint32_t r = 0; r < a.repr_dim; ++r) {
        const double dr = trace.repr_pre[r] > 0.0 ? drepr[r] : 0.0;
        grads.repr_b[r] += dr;
        if (dr == 0.0) {
            continue;
        }
        const double* w_row = params.repr_w.data() + static_cast<size_t>(r) * a.embed_dim;
        double* g_row = grads.repr_w.data() + static_cast<size_t>(r) * a.embed_dim;
        for (uint32_t h = 0; h < a.embed_dim; ++h) {
            g_row[h] += dr * trace.fused[h];
            dfused[h] += dr * w_row[h];
        }
    }

    std::vector<double> x(a.feature_dim);
    for (uint32_t i = 0; i < a.n_frames; ++i) {
        const double* embed = trace.frame_embeds.data() + static_cast<size_t>(i) * a.embed_dim;
        const double* pre = trace.frame_pre.data() + static_cast<size_t>(i) * a.embed_dim;
        double dot = 0.0;
        for (uint32_t h = 0; h < a.embed_dim; ++h) {
            dot += embed[h] * dfused[h];
        }
        grads.fusion[i] += dot;

        const double w_i = params.fusion[i];
        const float* src = frame_set.features.data() + static_cast<size_t>(i) * a.feature_dim;
        for (uint32_t c = 0; c < a.feature_dim; ++c) {
            x[c] = static_cast<double>(src[c]);
        }
        for (uint32_t h = 0; h < a.embed_dim; ++h) {
            const double dh = pre[h] > 0.0 ? w_i * dfused[h] : 0.0;
            grads.embed_b[h] += dh;
            if (dh == 0.0) {
                continue;
            }
            double* g_row = grads.embed_w.data() + static_cast<size_t>(h) * a.feature_dim;
            for (uint32_t c = 0; c < a.feature_dim; ++c) {
                g_row[c] += dh * x[c];
            }
        }
    }
}

} // namespace

void TrainConfig::validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
        throw Error::config("alpha and beta must be finite and non-negative");
    }
    if (alpha + beta <= 0.0) {
        throw Error::config("alpha + beta must be positive");
    }
    if (!(margin >= 0.0) || !std::isfinite(margin)) {
        throw Error::config("margin must be finite and non-negative");
    }
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw Error::config("learning_rate must be finite and non-negative");
    }
    if (batch_size < 1) {
        throw Error::config("batch_size must be at least 1");
    }
    if (iterations < 1) {
        throw Error::config("iterations must be at least 1");
    }
    parse_optimizer(optimizer);
}

double classification_loss(const std::vector<double>& probs, uint32_t label) {
    if (label >= probs.size()) {
        throw Error::data("label " + std::to_string(label) + " out of range for " +
                          std::to_string(probs.size()) + " classes");
    }
    const double p = std::max(probs[label], prob_floor);
    return -std::log(p);
}

double intra_pair_loss(const std::vector<double>& ip1, const std::vector<double>& ip2, double margin) {
    if (ip1.size() != ip2.size()) {
        throw Error::data("intra_pair_loss length mismatch");
    }
    if (!(margin >= 0.0)) {
        throw Error::config("margin must be non-negative");
    }
    double dist2 = 0.0;
    for (size_t i = 0; i < ip1.size(); ++i) {
        const double d = ip1[i] - ip2[i];
        dist2 += d * d;
    }
    return std::max(dist2 - margin, 0.0);
}

LossBreakdown total_loss(const ModelParams& params, const IntraPair& pair, const TrainConfig& config) {
    const ForwardTrace t1 = forward(params, pair.a);
    const ForwardTrace t2 = forward(params, pair.b);
    LossBreakdown loss;
    loss.inter = 0.5 * (classification_loss(t1.probs, pair.label) + classification_loss(t2.probs, pair.label));
    loss.intra = intra_pair_loss(t1.ip, t2.ip, config.margin);
    loss.total = config.alpha * loss.inter + config.beta * loss.intra;
    return loss;
}

ModelParams backward(const ModelParams& params, const IntraPair& pair, const TrainConfig& config,
                     LossBreakdown* loss_out) {
    const Architecture& a = params.arch;
    const ForwardTrace t1 = forward(params, pair.a);
    const ForwardTrace t2 = forward(params, pair.b);
    if (pair.label >= a.num_classes) {
        throw Error::data("pair label " + std::to_string(pair.label) + " out of range");
    }

    LossBreakdown loss;
    loss.inter = 0.5 * (classification_loss(t1.probs, pair.label) + classification_loss(t2.probs, pair.label));
    loss.intra = intra_pair_loss(t1.ip, t2.ip, config.margin);
    loss.total = config.alpha * loss.inter + config.beta * loss.intra;
    if (loss_out != nullptr) {
        *loss_out = loss;
    }

    double dist2 = 0.0;
    for (uint32_t j = 0; j < a.code_length; ++j) {
        const double d = t1.ip[j] - t2.ip[j];
        dist2 += d * d;
    }
    // Hinge subgradient is 0 at dist2 == margin, so the inactive branch is exact.
    const bool hinge_active = dist2 > config.margin;

    std::vector<double> dip1(a.code_length, 0.0);
    std::vector<double> dip2(a.code_length, 0.0);
    if (hinge_active && config.beta != 0.0) {
        for (uint32_t j = 0; j < a.code_length; ++j) {
            const double d = 2.0 * config.beta * (t1.ip[j] - t2.ip[j]);
            dip1[j] = d;
            dip2[j] = -d;
        }
    }

    ModelParams grads = ModelParams::zeros_like(a);
    const double ce_weight = 0.5 * config.alpha;
    backprop_trace(params, pair.a, t1, ce_logit_grad(t1, pair.label, ce_weight), dip1, grads);
    backprop_trace(params, pair.b, t2, ce_logit_grad(t2, pair.label, ce_weight), dip2, grads);

    for (const std::vector<double>* tensor : grads.tensors()) {
        for (double g : *tensor) {
            if (!std::isfinite(g)) {
                throw Error::numeric("non-finite gradient");
            }
        }
    }
    return grads;
}

namespace {

// Hash of every non-smooth branch the loss takes: ReLU signs, the CE clamp,
// and the hinge. When the two probes of a central difference disagree here,
// the quotient straddles a kink and estimates no derivative.
uint64_t branch_signature(const ForwardTrace& t1, const ForwardTrace& t2, uint32_t label, double margin) {
    uint64_t h = 1469598103934665603ull;
    const auto mix = [&h](bool bit) { h = (h ^ static_cast<uint64_t>(bit)) * 1099511628211ull; };
    for (const ForwardTrace* t : {&t1, &t2}) {
        for (double v : t->frame_pre) mix(v > 0.0);
        for (double v : t->repr_pre) mix(v > 0.0);
        mix(t->probs[label] < prob_floor);
    }
    double dist2 = 0.0;
    for (size_t j = 0; j < t1.ip.size(); ++j) {
        const double d = t1.ip[j] - t2.ip[j];
        dist2 += d * d;
    }
    mix(dist2 > margin);
    return h;
}

} // namespace

double grad_check(ModelParams params, const IntraPair& pair, const TrainConfig& config, double epsilon) {
    if (!(epsilon > 0.0)) {
        throw Error::config("epsilon must be positive");
    }
    const ModelParams analytic = backward(params, pair, config);
    auto p_tensors = params.tensors();
    auto a_tensors = analytic.tensors();

    const auto probe = [&](double& slot, double value) {
        slot = value;
        const ForwardTrace t1 = forward(params, pair.a);
        const ForwardTrace t2 = forward(params, pair.b);
        const double inter =
            0.5 * (classification_loss(t1.probs, pair.label) + classification_loss(t2.probs, pair.label));
        const double intra = intra_pair_loss(t1.ip, t2.ip, config.margin);
        return std::pair<double, uint64_t>(config.alpha * inter + config.beta * intra,
                                           branch_signature(t1, t2, pair.label, config.margin));
    };

    double worst = 0.0;
    for (size_t t = 0; t < p_tensors.size(); ++t) {
        std::vector<double>& tensor = *p_tensors[t];
        const std::vector<double>& grad = *a_tensors[t];
        for (size_t i = 0; i < tensor.size(); ++i) {
            const double original = tensor[i];
            const auto [up, up_branches] = probe(tensor[i], original + epsilon);
            const auto [down, down_branches] = probe(tensor[i], original - epsilon);
            tensor[i] = original;
            if (up_branches != down_branches) {
                continue;
            }

            const double numeric = (up - down) / (2.0 * epsilon);
            const double a = grad[i];
            const double scale = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            worst = std::max(worst, std::fabs(a - numeric) / scale);
        }
    }
    return worst;
}

double grad_check_random(const Architecture& arch, const TrainConfig& config, uint64_t seed,
                         uint32_t instances, double epsilon) {
    arch.validate();
    Rng rng(seed);
    double worst = 0.0;
    for (uint32_t i = 0; i < instances; ++i) {
        const ModelParams params = init_params(arch, rng.next_u64());

        IntraPair pair;
        pair.label = static_cast<uint32_t>(rng.below(arch.num_classes));
        auto make_set = [&](uint32_t first_index) {
            FrameSet set;
            set.video_id = 0;
            set.indices.resize(arch.n_frames);
            std::iota(set.indices.begin(), set.indices.end(), first_index);
            set.features.resize(static_cast<size_t>(arch.n_frames) * arch.feature_dim);
            for (float& f : set.features) {
                f = static_cast<float>(rng.gaussian());
            }
            return set;
        };
        pair.a = make_set(0);
        pair.b = make_set(arch.n_frames);

        worst = std::max(worst, grad_check(params, pair, config, epsilon));
    }
    return worst;
}

TrainResult train(const Dataset& dataset, const Architecture& arch, const TrainConfig& config) {
    arch.validate();
    config.validate();
    if (arch.feature_dim != dataset.feature_dim) {
        throw Error::config("feature_dim " + std::to_string(arch.feature_dim) +
                            " does not match dataset feature_dim " + std::to_string(dataset.feature_dim));
    }
    if (arch.num_classes != dataset.num_classes) {
        throw Error::config("num_classes " + std::to_string(arch.num_classes) +
                            " does not match dataset num_classes " + std::to_string(dataset.num_classes));
    }
    if (dataset.videos.empty()) {
        throw Error::data("training dataset is empty");
    }
    for (const Video& video : dataset.videos) {
        if (video.num_frames < 2 * arch.n_frames) {
            throw Error::data("video " + std::to_string(video.id) + " has " +
                              std::to_string(video.num_frames) + " frames, an intra-pair needs at least " +
                              std::to_string(2 * arch.n_frames));
        }
    }

    TrainResult result;
    result.params = init_params(arch, config.seed);
    Optimizer optimizer(parse_optimizer(config.optimizer), arch);

    // Distinct stream from parameter init so changing the architecture does
    // not perturb the sampling sequence.
    Rng sample_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<uint32_t> order(dataset.videos.size());
    std::iota(order.begin(), order.end(), 0);
    size_t pos = order.size();

    result.history.reserve(config.iterations);
    for (uint32_t it = 0; it < config.iterations; ++it) {
        ModelParams batch_grads = ModelParams::zeros_like(arch);
        LossBreakdown batch_loss;
        for (uint32_t b = 0; b < config.batch_size; ++b) {
            if (pos == order.size()) {
                sample_rng.shuffle(order);
                pos = 0;
            }
            const Video& video = dataset.videos[order[pos++]];
            const IntraPair pair = sample_intra_pair(video, arch.n_frames, sample_rng);

            LossBreakdown pair_loss;
            const ModelParams pair_grads = backward(result.params, pair, config, &pair_loss);
            auto sum_tensors = batch_grads.tensors();
            auto add_tensors = pair_grads.tensors();
            for (size_t t = 0; t < sum_tensors.size(); ++t) {
                std::vector<double>& dst = *sum_tensors[t];
                const std::vector<double>& src = *add_tensors[t];
                for (size_t i = 0; i < dst.size(); ++i) {
                    dst[i] += src[i];
                }
            }
            batch_loss.total += pair_loss.total;
            batch_loss.inter += pair_loss.inter;
            batch_loss.intra += pair_loss.intra;
        }
        const double inv = 1.0 / static_cast<double>(config.batch_size);
        for (std::vector<double>* tensor : batch_grads.tensors()) {
            for (double& g : *tensor) {
                g *= inv;
            }
        }
        batch_loss.total *= inv;
        batch_loss.inter *= inv;
        batch_loss.intra *= inv;
        if (!std::isfinite(batch_loss.total)) {
            throw Error::numeric("training diverged at iteration " + std::to_string(it + 1));
        }
        result.history.push_back(batch_loss);
        optimizer.step(result.params, batch_grads, config.learning_rate);
    }
    return result;
}

void save_loss_history(const std::vector<LossBreakdown>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error::data("cannot open '" + path + "' for writing");
    }
    out << "iteration,total,inter,intra\n";
    for (size_t i = 0; i < history.size(); ++i) {
        out << (i + 1) << ',' << format_g12(history[i].total) << ',' << format_g12(history[i].inter)
            << ',' << format_g12(history[i].intra) << '\n';
    }
    out.flush();
    if (!out) {
        throw Error::data("write to '" + path + "' failed");
    }
}

} // namespace maskhash
