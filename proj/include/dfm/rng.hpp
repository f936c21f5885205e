#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>

#include "dfm/common.hpp"

namespace dfm {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

/// One deterministic random substream. Distributions are implemented inline
/// (not via std::*_distribution) so that a (seed, call sequence) pair always
/// reproduces the same values.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(detail::splitmix64(seed)) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n) {
        require(n > 0, "Rng::below: n must be positive");
        // rejection sampling keeps the draw exactly uniform
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t r = gen_();
        while (r >= limit) r = gen_();
        return r % n;
    }

    /// Standard normal via Box-Muller; the second value of each pair is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform01();  // (0, 1], keeps log finite
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    Vec normal_vec(int dim) {
        Vec v(dim);
        for (int i = 0; i < dim; ++i) v[i] = normal();
        return v;
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Derive a child seed from a master seed and a stream index.
inline std::uint64_t substream_seed(std::uint64_t master, std::uint64_t index) {
    return detail::splitmix64(master ^ detail::splitmix64(index + 0x51ed2701));
}

/// Named random streams hanging off one master seed. Each consumer (time
/// draws, negative indices, noise, ...) gets its own stream, so adding or
/// removing draws on one stream never perturbs another.
class StreamSet {
public:
    explicit StreamSet(std::uint64_t master) : master_(master) {}

    Rng& stream(std::string_view name) {
        auto it = streams_.find(name);
        if (it == streams_.end()) {
            it = streams_.emplace(std::string(name), Rng(master_ ^ detail::fnv1a(name))).first;
        }
        return it->second;
    }

    std::uint64_t master() const { return master_; }

private:
    std::uint64_t master_;
    std::map<std::string, Rng, std::less<>> streams_;
};

}  // namespace dfm
