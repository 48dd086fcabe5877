#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace maskmatch {

// Deterministic random source. std::mt19937_64's output sequence is fixed by
// the standard, but the std distributions and std::shuffle are not, so every
// derived quantity is computed here to keep seeds portable across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_index(std::uint64_t n);

    // Uniform real in [0, 1) with 53 random bits.
    double uniform01();

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Standard normal via Box-Muller (no cached second value).
    double normal(double mean = 0.0, double stddev = 1.0);

    bool bernoulli(double p) { return uniform01() < p; }

    // Index drawn with probability proportional to weights (non-negative, positive sum).
    std::size_t categorical(std::span<const double> weights);

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_index(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    template <typename Container>
    void shuffle(Container& items) {
        shuffle(std::span(items.data(), items.size()));
    }

    template <typename Container>
    const auto& pick(const Container& items) {
        return items[static_cast<std::size_t>(uniform_index(items.size()))];
    }

private:
    std::mt19937_64 engine_;
};

// splitmix64 finaliser.
std::uint64_t mix_seed(std::uint64_t value);

// Expands one global seed into independent per-subsystem seeds.
std::uint64_t derive_seed(std::uint64_t base_seed, std::string_view subsystem);
std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t stream);

}  // namespace maskmatch
