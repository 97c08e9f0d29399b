#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace bitcn {

// Deterministic random source. The engine is mt19937_64 (fully specified by
// the standard); uniform and normal variates are derived with fixed bit
// arithmetic rather than std::*_distribution so that streams are identical
// across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform on [0, 1) with 53 bits of precision.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; two draws per variate, no caching,
    // so the stream position is a pure function of the call count.
    double normal();

    double normal(double mean, double sd) { return mean + sd * normal(); }

    // Uniform integer in [0, n). n must be positive.
    std::size_t uniform_index(std::size_t n);

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // Mixes a base seed with a textual tag and two integers into a fresh
    // stream seed. Used to give every consumer (dropout, shuffling, Monte
    // Carlo paths, ...) its own decorrelated stream.
    static std::uint64_t derive(std::uint64_t seed, std::string_view tag,
                                std::uint64_t a = 0, std::uint64_t b = 0);

    // Engine state as text; round-trips through deserialize().
    std::string serialize() const;
    void deserialize(const std::string& state);

private:
    std::mt19937_64 gen_;
};

} // namespace bitcn
