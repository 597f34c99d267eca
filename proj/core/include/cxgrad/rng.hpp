#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace cxgrad {

/// Deterministic xoshiro256** generator with hand-rolled distributions, so
/// seeded runs are bit-identical regardless of the standard library.
class Rng {
  public:
    explicit Rng(uint64_t seed);

    uint64_t next_u64();
    /// Uniform in [0,1).
    double uniform();
    /// Uniform in [lo,hi).
    double uniform(double lo, double hi);
    /// Standard normal (Box-Muller).
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    /// Uniform integer in [0,n).
    int uniform_int(int n);

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            int j = uniform_int(i + 1);
            std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
        }
    }

    /// Samples k distinct values from [0,n) in selection order.
    std::vector<int> choose(int n, int k);

  private:
    uint64_t state_[4];
    bool have_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

/// Fans a global seed out to independent per-component streams so that
/// adding a consumer in one component does not disturb the others.
uint64_t derive_seed(uint64_t seed, std::string_view component_tag);

}  // namespace cxgrad
