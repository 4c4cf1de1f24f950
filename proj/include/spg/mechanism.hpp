#pragma once

// How agents move their level once a policy's propensities are published.
// All three mechanisms score candidate levels by propensity minus linear
// moving cost; they differ in the noise applied to that utility.

#include <algorithm>
#include <cmath>
#include <vector>

#include "spg/rng.hpp"

namespace spg {

enum class Mechanism { best_response, noisy, softmax };

// Argmax with the fixed tie order: stay put first, then the smaller move,
// then the lower level.
inline int argmax_with_ties(const std::vector<double>& util, int u0) {
    auto better = [&](int a, int b) {  // strict preference of a over b
        if (util[a] != util[b]) return util[a] > util[b];
        if ((a == u0) != (b == u0)) return a == u0;
        int da = std::abs(a - u0), db = std::abs(b - u0);
        if (da != db) return da < db;
        return a < b;
    };
    int best = u0;
    for (int w = 0; w < int(util.size()); ++w)
        if (w != best && better(w, best)) best = w;
    return best;
}

// prop[w] is the published propensity at level w on the grid the agent moves
// on; cost of a move is cost_c * scale * |w - u0|. The noisy variant adds
// one N(0, cost_c^2) draw per candidate, the softmax variant samples from
// Softmax(5 * utility).
inline int respond(Mechanism mech, const double* prop, std::size_t M, int u0, double cost_c,
                   double scale, rng::Engine& g) {
    std::vector<double> util(M);
    for (std::size_t w = 0; w < M; ++w)
        util[w] = prop[w] - cost_c * scale * std::abs(double(w) - double(u0));
    switch (mech) {
        case Mechanism::best_response: return argmax_with_ties(util, u0);
        case Mechanism::noisy:
            for (auto& x : util) x += rng::gaussian(g, 0.0, cost_c);
            return argmax_with_ties(util, u0);
        case Mechanism::softmax: {
            double mx = *std::max_element(util.begin(), util.end());
            std::vector<double> p(M);
            for (std::size_t w = 0; w < M; ++w) p[w] = std::exp(5.0 * (util[w] - mx));
            return int(rng::pick_weighted(g, p.data(), M));
        }
    }
    return u0;
}

}  // namespace spg
