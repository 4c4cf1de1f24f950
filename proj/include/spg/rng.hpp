#pragma once

// Deterministic stream derivation. Every random draw in the project comes
// from an engine built here, so a run is reproducible from (root seed, path
// of tags) alone and independent streams never share state.

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace spg::rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// FNV-1a, used to turn stream names into tags.
inline std::uint64_t tag(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t fold(std::uint64_t seed, std::uint64_t t) {
    return splitmix64(seed ^ splitmix64(t));
}

using Engine = std::mt19937_64;

inline Engine make(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = splitmix64(root);
    for (auto t : path) s = fold(s, t);
    return Engine(s);
}

inline Engine make(std::uint64_t root, std::string_view name) {
    return make(root, {tag(name)});
}

inline Engine make(std::uint64_t root, std::string_view name, std::uint64_t index) {
    return make(root, {tag(name), index});
}

inline double gaussian(Engine& g, double mean = 0.0, double sd = 1.0) {
    std::normal_distribution<double> d(mean, sd);
    return d(g);
}

inline double uniform(Engine& g, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(g);
}

// Index in [0, n) with probability weights[i] (weights need not be normalised).
inline std::size_t pick_weighted(Engine& g, const double* weights, std::size_t n) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += weights[i];
    double r = uniform(g, 0.0, total);
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        acc += weights[i];
        if (r < acc) return i;
    }
    return n - 1;
}

}  // namespace spg::rng
