#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace wamo {

// Deterministic RNG. std::mt19937_64 is fully specified by the standard, and
// the distribution transforms are written out here because the std::*_distribution
// classes are implementation-defined (results must reproduce bit-exactly).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t raw() { return gen_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    // Box-Muller; one fresh pair per call keeps the draw sequence position-independent.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = (static_cast<double>(gen_() >> 11) + 1.0) * (1.0 / 9007199254740992.0);
        double u2 = uniform();
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        return mean + stddev * z;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // First k entries of a uniform sample without replacement from {0..n-1}.
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k) {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        for (std::size_t i = 0; i < k && i + 1 < n; ++i) {
            std::size_t j = i + static_cast<std::size_t>(below(n - i));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(k);
        return idx;
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace wamo
