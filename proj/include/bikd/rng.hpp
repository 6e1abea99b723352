#pragma once

#include <cstdint>
#include <cstddef>
#include <vector>

namespace bikd {

// Deterministic xoshiro256++ generator seeded through splitmix64.
// The standard <random> distributions are implementation-defined, so every
// draw used anywhere in the project goes through this class to keep runs
// bit-reproducible across compilers.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // [0, 1)
    double uniform();
    double uniform(double lo, double hi);

    // standard normal via Box-Muller, second draw cached
    double normal();
    double normal(double mean, double stddev);

    // [0, n)
    std::size_t below(std::size_t n);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = below(i + 1);
            std::swap(v[i], v[j]);
        }
    }

private:
    std::uint64_t state_[4];
    bool have_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

// Derives an independent stream seed from (base, stream).
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream);

} // namespace bikd
