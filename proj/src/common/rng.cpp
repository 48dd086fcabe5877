#include "maskmatch/common/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace maskmatch {

std::uint64_t Rng::uniform_index(std::uint64_t n) {
    if (n == 0) {
        throw std::invalid_argument("uniform_index: empty range");
    }
    // Rejection sampling over the largest multiple of n.
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    std::uint64_t x = engine_();
    while (x >= limit) {
        x = engine_();
    }
    return x % n;
}

double Rng::uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal(double mean, double stddev) {
    double u1 = uniform01();
    while (u1 <= 0.0) {
        u1 = uniform01();
    }
    const double u2 = uniform01();
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    return mean + stddev * z;
}

std::size_t Rng::categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) {
            throw std::invalid_argument("categorical: negative or NaN weight");
        }
        total += w;
    }
    if (weights.empty() || !(total > 0.0)) {
        throw std::invalid_argument("categorical: weights must have a positive sum");
    }
    const double u = uniform01() * total;
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] > 0.0) {
            last_positive = i;
        }
        acc += weights[i];
        if (u < acc) {
            return i;
        }
    }
    // Rounding left u at the very top of the range.
    return last_positive;
}

std::uint64_t mix_seed(std::uint64_t value) {
    std::uint64_t z = value + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t base_seed, std::string_view subsystem) {
    // FNV-1a over the name, folded into the base seed.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : subsystem) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return mix_seed(base_seed ^ mix_seed(h));
}

std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t stream) {
    return mix_seed(base_seed ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

}  // namespace maskmatch
