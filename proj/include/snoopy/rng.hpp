#ifndef SNOOPY_RNG_HPP
#define SNOOPY_RNG_HPP

#include <cstdint>
#include <string_view>
#include <vector>

namespace snoopy {

// Hand-rolled splitmix64 generator. The standard <random> distributions are
// implementation-defined, which would make serialized artifacts differ across
// toolchains; a fixed algorithm keeps every output byte-identical for a seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform integer in [0, n). n == 0 yields 0.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0)
            return 0;
        return next() % n;
    }

    // Uniform integer in [lo, hi], inclusive.
    std::int64_t range(std::int64_t lo, std::int64_t hi) {
        if (hi <= lo)
            return lo;
        return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    // Uniform double in [0, 1).
    double unit() {
        return static_cast<double>(next() >> 11) * (1.0 / 9007199254740992.0);
    }

    bool bernoulli(double p) { return unit() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Derives an independent stream seed from a base seed and a purpose tag.
inline std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag) {
    Rng r(seed ^ fnv1a64(tag));
    return r.next();
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag, std::uint64_t n) {
    Rng r(mix_seed(seed, tag) ^ (0x9e3779b97f4a7c15ULL * (n + 1)));
    return r.next();
}

} // namespace snoopy

#endif // SNOOPY_RNG_HPP
