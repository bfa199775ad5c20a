// Copyright the maskhash authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#include "maskhash/model.hpp"
#include "maskhash/rng.hpp"

#include "check_error.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

using namespace maskhash;

namespace {

Architecture small_arch() {
    Architecture a;
    a.feature_dim = 8;
    a.embed_dim = 16;
    a.repr_dim = 8;
    a.code_length = 8;
    a.num_classes = 4;
    a.n_frames = 3;
    return a;
}

FrameSet random_frame_set(const Architecture& arch, Rng& rng) {
    FrameSet set;
    set.video_id = 0;
    set.indices.resize(arch.n_frames);
    for (uint32_t i = 0; i < arch.n_frames; ++i) set.indices[i] = i;
    set.features.resize(size_t{arch.n_frames} * arch.feature_dim);
    for (auto& x : set.features) x = static_cast<float>(rng.gaussian());
    return set;
}

} // namespace

TEST_CASE("architecture validation enforces positive dims, code bounds, and class count") {
    Architecture a = small_arch();
    CHECK_NOTHROW(a.validate());

    a = small_arch();
    a.feature_dim = 0;
    CHECK_ERROR_KIND(a.validate(), ErrorKind::config);

    a = small_arch();
    a.code_length = 0;
    CHECK_ERROR_KIND(a.validate(), ErrorKind::config);

    a = small_arch();
    a.code_length = 513;
    CHECK_ERROR_KIND(a.validate(), ErrorKind::config);

    a = small_arch();
    a.code_length = 512;
    CHECK_NOTHROW(a.validate());

    a = small_arch();
    a.num_classes = 1;
    CHECK_ERROR_KIND(a.validate(), ErrorKind::config);

    a = small_arch();
    a.n_frames = 0;
    CHECK_ERROR_KIND(a.validate(), ErrorKind::config);
}

TEST_CASE("parameter initialization sets uniform fusion weights and bounded layers") {
    const Architecture arch = small_arch();
    const ModelParams p = init_params(arch, 123);

    REQUIRE(p.fusion.size() == arch.n_frames);
    for (double w : p.fusion) CHECK(w == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    REQUIRE(p.embed_w.size() == size_t{arch.embed_dim} * arch.feature_dim);
    REQUIRE(p.embed_b.size() == arch.embed_dim);
    REQUIRE(p.repr_w.size() == size_t{arch.repr_dim} * arch.embed_dim);
    REQUIRE(p.encode_w.size() == size_t{arch.code_length} * arch.repr_dim);
    REQUIRE(p.cls_w.size() == size_t{arch.num_classes} * arch.code_length);
    REQUIRE(p.cls_b.size() == arch.num_classes);

    // Uniform bound for the first affine layer: sqrt(6 / (8 + 16)) = 0.5.
    bool any_nonzero = false;
    for (double w : p.embed_w) {
        CHECK(std::abs(w) <= 0.5);
        any_nonzero = any_nonzero || w != 0.0;
    }
    CHECK(any_nonzero);

    for (double b : p.embed_b) CHECK(b == 0.0);
    for (double b : p.repr_b) CHECK(b == 0.0);
    for (double b : p.encode_b) CHECK(b == 0.0);
    for (double b : p.cls_b) CHECK(b == 0.0);
}

TEST_CASE("parameter initialization is deterministic per seed") {
    const Architecture arch = small_arch();
    const ModelParams a = init_params(arch, 9);
    const ModelParams b = init_params(arch, 9);
    const ModelParams c = init_params(arch, 10);
    CHECK(a.embed_w == b.embed_w);
    CHECK(a.cls_w == b.cls_w);
    CHECK(a.embed_w != c.embed_w);
}

TEST_CASE("tensor enumeration walks every parameter exactly once in declaration order") {
    ModelParams p = init_params(small_arch(), 1);
    const auto tensors = p.tensors();
    REQUIRE(tensors.size() == 9);
    CHECK(tensors[0] == &p.fusion);
    CHECK(tensors[1] == &p.embed_w);
    CHECK(tensors[2] == &p.embed_b);
    CHECK(tensors[3] == &p.repr_w);
    CHECK(tensors[4] == &p.repr_b);
    CHECK(tensors[5] == &p.encode_w);
    CHECK(tensors[6] == &p.encode_b);
    CHECK(tensors[7] == &p.cls_w);
    CHECK(tensors[8] == &p.cls_b);
}

TEST_CASE("fusion computes the weighted embedding sum") {
    SUBCASE("hand case") {
        const std::vector<double> embeddings{1.0, 2.0, 3.0, 4.0};
        const std::vector<double> weights{0.5, 0.5};
        const auto fused = fuse(embeddings, 2, 2, weights);
        REQUIRE(fused.size() == 2);
        CHECK(fused[0] == doctest::Approx(2.0).epsilon(1e-15));
        CHECK(fused[1] == doctest::Approx(3.0).epsilon(1e-15));
    }

    SUBCASE("selector weight picks one frame") {
        const std::vector<double> embeddings{1.0, 2.0, 3.0, 4.0};
        const auto fused = fuse(embeddings, 2, 2, {0.0, 1.0});
        CHECK(fused == std::vector<double>{3.0, 4.0});
    }

    SUBCASE("linearity in the weights") {
        Rng rng(4);
        std::vector<double> embeddings(3 * 5);
        for (auto& x : embeddings) x = rng.gaussian();
        std::vector<double> w1(3), w2(3);
        for (auto& x : w1) x = rng.gaussian();
        for (auto& x : w2) x = rng.gaussian();

        std::vector<double> w_sum(3);
        for (size_t i = 0; i < 3; ++i) w_sum[i] = w1[i] + w2[i];

        const auto f1 = fuse(embeddings, 3, 5, w1);
        const auto f2 = fuse(embeddings, 3, 5, w2);
        const auto fs = fuse(embeddings, 3, 5, w_sum);
        for (size_t h = 0; h < 5; ++h) {
            CHECK(fs[h] == doctest::Approx(f1[h] + f2[h]).epsilon(1e-12));
        }
    }

    SUBCASE("shape mismatch") {
        CHECK_ERROR_KIND(fuse({1.0, 2.0}, 2, 2, {0.5, 0.5}), ErrorKind::data);
        CHECK_ERROR_KIND(fuse({1.0, 2.0, 3.0, 4.0}, 2, 2, {0.5}), ErrorKind::data);
    }
}

TEST_CASE("forward pass with zero parameters yields half-activations and uniform probabilities") {
    const Architecture arch = small_arch();
    const ModelParams p = ModelParams::zeros_like(arch);

    Rng rng(2);
    const FrameSet set = random_frame_set(arch, rng);
    const ForwardTrace t = forward(p, set);

    REQUIRE(t.ip.size() == arch.code_length);
    for (double v : t.ip) CHECK(v == 0.5);
    REQUIRE(t.probs.size() == arch.num_classes);
    for (double v : t.probs) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("forward pass matches a hand-computed scalar chain") {
    Architecture arch;
    arch.feature_dim = 1;
    arch.embed_dim = 1;
    arch.repr_dim = 1;
    arch.code_length = 1;
    arch.num_classes = 2;
    arch.n_frames = 1;

    ModelParams p = ModelParams::zeros_like(arch);
    p.fusion = {1.0};
    p.embed_w = {1.0};
    p.repr_w = {1.0};
    p.encode_w = {1.0};
    p.cls_w = {1.0, 1.0};

    FrameSet set;
    set.indices = {0};
    set.features = {0.3f};

    const ForwardTrace t = forward(p, set);
    const double x = static_cast<double>(0.3f);
    CHECK(t.frame_embeds[0] == doctest::Approx(x).epsilon(1e-15));
    CHECK(t.fused[0] == doctest::Approx(x).epsilon(1e-15));
    CHECK(t.repr[0] == doctest::Approx(x).epsilon(1e-15));
    CHECK(t.ip[0] == doctest::Approx(1.0 / (1.0 + std::exp(-x))).epsilon(1e-15));
    CHECK(t.probs[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(t.probs[1] == doctest::Approx(0.5).epsilon(1e-15));

    // Negative input dies at the first ReLU, leaving the sigmoid midpoint.
    set.features = {-0.3f};
    const ForwardTrace tn = forward(p, set);
    CHECK(tn.frame_embeds[0] == 0.0);
    CHECK(tn.ip[0] == 0.5);
}

TEST_CASE("forward probabilities are a valid distribution across random models") {
    const Architecture arch = small_arch();
    Rng rng(17);
    for (int trial = 0; trial < 1000; ++trial) {
        const ModelParams p = init_params(arch, rng.next_u64());
        const FrameSet set = random_frame_set(arch, rng);
        const ForwardTrace t = forward(p, set);

        double sum = 0.0;
        for (double v : t.probs) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        for (double v : t.ip) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);
        }
    }
}

TEST_CASE("forward pass is deterministic") {
    const Architecture arch = small_arch();
    const ModelParams p = init_params(arch, 5);
    Rng rng(6);
    const FrameSet set = random_frame_set(arch, rng);
    const ForwardTrace a = forward(p, set);
    const ForwardTrace b = forward(p, set);
    CHECK(a.ip == b.ip);
    CHECK(a.probs == b.probs);
}

TEST_CASE("forward pass rejects shape mismatches and non-finite intermediates") {
    const Architecture arch = small_arch();
    ModelParams p = init_params(arch, 1);
    Rng rng(1);
    FrameSet set = random_frame_set(arch, rng);

    FrameSet wrong = set;
    wrong.features.pop_back();
    CHECK_ERROR_KIND(forward(p, wrong), ErrorKind::data);

    p.embed_w[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_ERROR_TEXT(forward(p, set), ErrorKind::numeric, "embed");
}

TEST_CASE("class prediction takes the first argmax") {
    CHECK(predict_class({0.1, 0.7, 0.2}) == 1);
    CHECK(predict_class({0.4, 0.4, 0.2}) == 0);
    CHECK(predict_class({0.25, 0.25, 0.25, 0.25}) == 0);
    CHECK_ERROR_KIND(predict_class({}), ErrorKind::data);
}

TEST_CASE("binarization thresholds strictly above one half") {
    const auto bits = binarize({0.9, 0.1, 0.51, 0.49, 0.5});
    CHECK(bits == std::vector<uint8_t>{1, 0, 1, 0, 0});
    CHECK_ERROR_KIND(binarize({1.2}), ErrorKind::data);
    CHECK_ERROR_KIND(binarize({-0.1}), ErrorKind::data);
}

TEST_CASE("model save/load round-trips through float32 exactly") {
    TempDir dir;
    const Architecture arch = small_arch();
    const ModelParams p = init_params(arch, 77);
    const auto path = dir.file("model.bin");
    save_model(p, path);

    const ModelParams loaded = load_model(path);
    CHECK(loaded.arch == arch);

    const auto orig = p.tensors();
    const auto got = loaded.tensors();
    REQUIRE(orig.size() == got.size());
    for (size_t t = 0; t < orig.size(); ++t) {
        REQUIRE(orig[t]->size() == got[t]->size());
        for (size_t i = 0; i < orig[t]->size(); ++i) {
            CHECK((*got[t])[i] == static_cast<double>(static_cast<float>((*orig[t])[i])));
        }
    }

    // A second save of the loaded model reproduces the file bytes.
    const auto path2 = dir.file("model2.bin");
    save_model(loaded, path2);
    CHECK(read_bytes(path2) == read_bytes(path));
}

TEST_CASE("model loading rejects corrupted files") {
    TempDir dir;
    const auto path = dir.file("model.bin");
    save_model(init_params(small_arch(), 3), path);

    SUBCASE("wrong magic") {
        auto bytes = read_bytes(path);
        bytes[0] ^= 0xff;
        write_bytes(dir.file("bad.bin"), bytes);
        CHECK_ERROR_KIND(load_model(dir.file("bad.bin")), ErrorKind::data);
    }

    SUBCASE("truncation") {
        auto bytes = read_bytes(path);
        bytes.resize(bytes.size() - 3);
        write_bytes(dir.file("bad.bin"), bytes);
        CHECK_ERROR_KIND(load_model(dir.file("bad.bin")), ErrorKind::data);
    }

    SUBCASE("trailing bytes") {
        auto bytes = read_bytes(path);
        bytes.push_back(0);
        write_bytes(dir.file("bad.bin"), bytes);
        CHECK_ERROR_KIND(load_model(dir.file("bad.bin")), ErrorKind::data);
    }

    SUBCASE("missing file") {
        CHECK_ERROR_KIND(load_model(dir.file("absent.bin")), ErrorKind::data);
    }
}
