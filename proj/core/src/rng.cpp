#include "cxgrad/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace cxgrad {

namespace {

uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(uint64_t seed) {
    uint64_t s = seed;
    for (auto& w : state_) w = splitmix64(s);
}

uint64_t Rng::next_u64() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    if (have_cached_normal_) {
        have_cached_normal_ = false;
        return cached_normal_;
    }
    double u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    cached_normal_ = r * std::sin(theta);
    have_cached_normal_ = true;
    return r * std::cos(theta);
}

int Rng::uniform_int(int n) {
    if (n <= 0) throw std::invalid_argument("Rng::uniform_int: n must be positive");
    // Rejection sampling for an unbiased draw.
    const uint64_t bound = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t v = 0;
    do {
        v = next_u64();
    } while (v >= limit);
    return static_cast<int>(v % bound);
}

std::vector<int> Rng::choose(int n, int k) {
    if (k > n) throw std::invalid_argument("Rng::choose: k > n");
    std::vector<int> pool(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
    std::vector<int> out;
    out.reserve(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) {
        int j = i + uniform_int(n - i);
        std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
        out.push_back(pool[static_cast<size_t>(i)]);
    }
    return out;
}

uint64_t derive_seed(uint64_t seed, std::string_view component_tag) {
    // FNV-1a over the tag, mixed with the seed through splitmix.
    uint64_t h = 1469598103934665603ULL;
    for (char c : component_tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    uint64_t s = seed ^ h;
    return splitmix64(s);
}

}  // namespace cxgrad
