#pragma once

// Numerical verification helpers: central finite differences, Gaussian-RKHS
// functions with exact gradients and Gram-based norms (used to exercise the
// gradient-deviation bound), and exhaustive checking of the piecewise-policy
// response against brute-force search.

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "spg/mat.hpp"
#include "spg/rng.hpp"
#include "spg/synth_env.hpp"

namespace spg::theory {

inline std::vector<double> finite_difference(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
    double h = 1e-5) {
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double xi = x[i];
        x[i] = xi + h;
        double fp = f(x);
        x[i] = xi - h;
        double fm = f(x);
        x[i] = xi;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("max_rel_err: size mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double denom = std::max({1e-8, std::abs(a[i]), std::abs(b[i])});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

inline double gauss_kernel(const double* a, const double* b, std::size_t d, double sigma) {
    double s2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        double t = a[i] - b[i];
        s2 += t * t;
    }
    return std::exp(-s2 / (2.0 * sigma * sigma));
}

// f(z) = sum_i coef_i K(z, center_i), Gaussian kernel with bandwidth sigma.
struct RkhsFunction {
    Mat centers;               // m x d, inside [0,1]^d
    std::vector<double> coef;  // m entries in [-1, 1]
    double sigma = 0.5;

    std::size_t dim() const { return centers.cols; }

    double operator()(const std::vector<double>& z) const {
        double s = 0.0;
        for (std::size_t i = 0; i < centers.rows; ++i)
            s += coef[i] * gauss_kernel(z.data(), centers.row(i), dim(), sigma);
        return s;
    }

    // Exact: grad K(z, c) = -(z - c)/sigma^2 * K(z, c).
    std::vector<double> gradient(const std::vector<double>& z) const {
        std::vector<double> g(dim(), 0.0);
        double s2 = sigma * sigma;
        for (std::size_t i = 0; i < centers.rows; ++i) {
            double k = coef[i] * gauss_kernel(z.data(), centers.row(i), dim(), sigma);
            const double* c = centers.row(i);
            for (std::size_t j = 0; j < dim(); ++j) g[j] += -k * (z[j] - c[j]) / s2;
        }
        return g;
    }
};

inline RkhsFunction random_rkhs(std::size_t d, std::size_t max_centers, double sigma,
                                rng::Engine& g) {
    RkhsFunction f;
    f.sigma = sigma;
    std::size_t m = 1 + std::size_t(rng::uniform(g, 0.0, double(max_centers)));
    if (m > max_centers) m = max_centers;
    f.centers.resize(m, d);
    for (auto& x : f.centers.d) x = rng::uniform(g, 0.0, 1.0);
    f.coef.resize(m);
    for (auto& x : f.coef) x = rng::uniform(g, -1.0, 1.0);
    return f;
}

// ||f - g||_H from the joint Gram matrix; exact for finite expansions up to
// roundoff, so tiny negative squares are clamped.
inline double rkhs_distance(const RkhsFunction& f, const RkhsFunction& g) {
    if (f.dim() != g.dim() || f.sigma != g.sigma)
        throw std::invalid_argument("rkhs_distance: incompatible functions");
    std::size_t n = f.centers.rows + g.centers.rows;
    std::vector<const double*> pts(n);
    std::vector<double> c(n);
    for (std::size_t i = 0; i < f.centers.rows; ++i) {
        pts[i] = f.centers.row(i);
        c[i] = f.coef[i];
    }
    for (std::size_t i = 0; i < g.centers.rows; ++i) {
        pts[f.centers.rows + i] = g.centers.row(i);
        c[f.centers.rows + i] = -g.coef[i];
    }
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            s += c[i] * c[j] * gauss_kernel(pts[i], pts[j], f.dim(), f.sigma);
    return std::sqrt(std::max(0.0, s));
}

struct Lemma1Result {
    double max_ratio = 0.0;  // gap / bound over all test points
    std::size_t evaluated = 0;
    std::size_t degenerate = 0;  // bound below cutoff, gap required to vanish
};

// Checks ||grad f(z) - grad g(z)||_2 <= ||f - g||_H * sqrt(d)/sigma at each
// test point. For the Gaussian kernel the per-coordinate factor
// ||d_i K(z, .)||_H equals 1/sigma, so the bound vector has norm sqrt(d)/sigma.
inline Lemma1Result lemma1_check(const RkhsFunction& f, const RkhsFunction& g,
                                 const std::vector<std::vector<double>>& test_points) {
    double dist = rkhs_distance(f, g);
    double bound = dist * std::sqrt(double(f.dim())) / f.sigma;
    Lemma1Result r;
    for (const auto& z : test_points) {
        auto gf = f.gradient(z);
        auto gg = g.gradient(z);
        double gap2 = 0.0;
        for (std::size_t i = 0; i < gf.size(); ++i) {
            double t = gf[i] - gg[i];
            gap2 += t * t;
        }
        double gap = std::sqrt(gap2);
        ++r.evaluated;
        if (bound < 1e-12) {
            ++r.degenerate;
            if (gap > 1e-10) r.max_ratio = std::max(r.max_ratio, 2.0);
        } else {
            r.max_ratio = std::max(r.max_ratio, gap / bound);
        }
    }
    return r;
}

struct Prop2Result {
    std::size_t instances = 0;
    std::size_t movers = 0;
    std::size_t off_candidate = 0;  // movers that landed outside knots u (knots - eps_u)
    double max_excess = 0.0;        // best grid utility minus response utility
};

// Movers must land exactly in {knots} u {knots - eps_u}, and a brute-force
// grid search may beat the candidate response by at most cost_c * eps_u.
inline Prop2Result prop2_check(const synth::PiecewisePolicy& p, const std::vector<double>& u0s,
                               double cost_c, double eps_u = 1e-3, double grid_step = 1e-4) {
    Prop2Result r;
    auto util = [&](double u, double u0) {
        return synth::piecewise_at(p, u) - cost_c * std::abs(u - u0);
    };
    for (double u0 : u0s) {
        ++r.instances;
        double resp = synth::piecewise_policy_response(p, u0, cost_c, eps_u);
        if (resp != u0) {
            ++r.movers;
            bool on_candidate = false;
            for (double k : p.knots)
                if (resp == k || resp == k - eps_u) on_candidate = true;
            if (!on_candidate) ++r.off_candidate;
        }
        double best_grid = util(u0, u0);
        for (double u = 0.0; u <= 1.0 + 1e-12; u += grid_step)
            best_grid = std::max(best_grid, util(std::min(u, 1.0), u0));
        r.max_excess = std::max(r.max_excess, best_grid - util(resp, u0));
    }
    return r;
}

}  // namespace spg::theory
