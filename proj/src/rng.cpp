#include "bitcn/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace bitcn {

double Rng::normal() {
    // u1 in (0, 1] so the log is finite.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::uniform_index(std::size_t n) {
    // Multiply-shift; bias is < 2^-53 per draw, irrelevant at shuffle scale.
    return static_cast<std::size_t>(uniform() * static_cast<double>(n));
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace

std::uint64_t Rng::derive(std::uint64_t seed, std::string_view tag,
                          std::uint64_t a, std::uint64_t b) {
    std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a over the tag
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::uint64_t x = splitmix64(seed ^ h);
    x = splitmix64(x ^ splitmix64(a));
    x = splitmix64(x ^ splitmix64(b));
    return x;
}

std::string Rng::serialize() const {
    std::ostringstream os;
    os << gen_;
    return os.str();
}

void Rng::deserialize(const std::string& state) {
    std::istringstream is(state);
    is >> gen_;
}

} // namespace bitcn
