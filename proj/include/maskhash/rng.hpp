// Copyright the maskhash authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace maskhash {

// Deterministic random source. mt19937_64 has a fixed bit stream per seed, but the
// standard distributions do not, so every draw built on top of it is implemented
// here to keep artifacts byte-identical across toolchains.
class Rng {
public:
    explicit Rng(uint64_t seed) : _engine(seed) {}

    uint64_t next_u64() { return _engine(); }

    // Uniform in [0, 1) with 53 bits of resolution.
    double uniform01() {
        return static_cast<double>(_engine() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    // Uniform integer in [0, bound) via rejection sampling; unbiased for any bound.
    uint64_t below(uint64_t bound) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        uint64_t draw;
        do {
            draw = _engine();
        } while (draw >= limit);
        return draw % bound;
    }

    // Standard normal via the Marsaglia polar method; the spare draw is cached.
    double gaussian() {
        if (_has_spare) {
            _has_spare = false;
            return _spare;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform01() - 1.0;
            v = 2.0 * uniform01() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double scale = std::sqrt(-2.0 * std::log(s) / s);
        _spare = v * scale;
        _has_spare = true;
        return u * scale;
    }

    // Fisher-Yates; a full pass guarantees every permutation is reachable.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (size_t i = items.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 _engine;
    double _spare = 0.0;
    bool _has_spare = false;
};

} // namespace maskhash
