#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace gtrans {

// splitmix64 finalizer; used to derive independent named substreams from one
// master seed so partitions/epochs never share a stream.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_tag(std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t substream(std::uint64_t seed, std::string_view tag) {
    return mix64(seed ^ hash_tag(tag));
}

inline std::uint64_t substream(std::uint64_t seed, std::string_view tag, std::uint64_t a) {
    return mix64(substream(seed, tag) ^ mix64(a));
}

inline std::uint64_t substream(std::uint64_t seed, std::string_view tag, std::uint64_t a,
                               std::uint64_t b) {
    return mix64(substream(seed, tag, a) ^ mix64(b + 0x51ed270b56c7a0e5ULL));
}

// Thin deterministic wrapper over mt19937_64. The standard pins the engine's
// output sequence, and we avoid std::*_distribution so draws are identical
// on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform in [0, 1).
    double u01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

    // Uniform integer in [0, n). Lemire multiply-shift; bias is negligible
    // for the n used here (graph sizes, batch counts).
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(
            (static_cast<unsigned __int128>(next()) * n) >> 64);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

    // k distinct indices from [0, n), uniform without replacement.
    std::vector<std::size_t> sample_distinct(std::size_t n, std::size_t k) {
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
        std::vector<std::size_t> out;
        out.reserve(k);
        for (std::size_t i = 0; i < k && i < n; ++i) {
            std::size_t j = i + index(n - i);
            std::swap(pool[i], pool[j]);
            out.push_back(pool[i]);
        }
        return out;
    }

    // Permutation of [0, n) with no fixed point. Rejection sampling; the
    // acceptance probability tends to 1/e so a handful of retries suffice.
    std::vector<std::size_t> derangement(std::size_t n) {
        std::vector<std::size_t> p(n);
        for (;;) {
            for (std::size_t i = 0; i < n; ++i) p[i] = i;
            shuffle(p);
            bool ok = true;
            for (std::size_t i = 0; i < n; ++i) {
                if (p[i] == i) {
                    ok = false;
                    break;
                }
            }
            if (ok) return p;
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace gtrans
