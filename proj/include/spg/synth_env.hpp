#pragma once

// Synthetic strategic environment. Agents hold a discrete improvable level u
// (true grid of true_levels values, the principal observes a coarser grid of
// n_levels groups) and fixed features v. Deploying a policy publishes its
// propensity on every level; agents then move u according to one of three
// mechanisms before treatment is assigned.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "spg/agents.hpp"
#include "spg/mat.hpp"
#include "spg/mechanism.hpp"
#include "spg/rng.hpp"

namespace spg::synth {

struct SynthConfig {
    std::size_t dim_v = 20;
    std::size_t n_levels = 5;     // grid the principal sees and scores
    std::size_t true_levels = 5;  // grid agents actually move on, >= n_levels
    std::size_t batch_size = 3000;
    std::size_t eval_size = 10000;
    double cost_c = 0.1;
    Mechanism mechanism = Mechanism::best_response;
    std::uint64_t structural_seed = 33;
    bool noise_on = true;

    void validate() const {
        if (dim_v == 0 || n_levels < 2) throw std::invalid_argument("synth: bad dimensions");
        if (true_levels < n_levels) throw std::invalid_argument("synth: true_levels < n_levels");
        if (cost_c < 0.0) throw std::invalid_argument("synth: negative cost");
    }
};

struct StructuralParams {
    Mat W;                       // true_levels x dim_v, entries N(1,1)
    std::vector<double> beta_u;  // true_levels, evenly spaced over [-5, 5]
    std::vector<double> beta_v;  // dim_v, N(0,1)
};

inline StructuralParams make_structural(const SynthConfig& cfg) {
    cfg.validate();
    auto g = rng::make(cfg.structural_seed, "structure");
    StructuralParams sp;
    sp.W.resize(cfg.true_levels, cfg.dim_v);
    for (auto& x : sp.W.d) x = rng::gaussian(g, 1.0, 1.0);
    sp.beta_u.resize(cfg.true_levels);
    std::size_t M = cfg.true_levels;
    for (std::size_t i = 0; i < M; ++i)
        sp.beta_u[i] = M == 1 ? 0.0 : -5.0 + 10.0 * double(i) / double(M - 1);
    sp.beta_v.resize(cfg.dim_v);
    for (auto& x : sp.beta_v) x = rng::gaussian(g, 0.0, 1.0);
    return sp;
}

// Equal-width grouping of the true grid into the observed one.
inline std::size_t coarsen(std::size_t fine, std::size_t true_levels, std::size_t n_levels) {
    return fine * n_levels / true_levels;
}

// One true-grid step measured in base-grid (5-level) units: beta_u spans
// [-5,5] regardless of true_levels, so the physical cost of a step shrinks
// as the grid refines. Equals 1 when no coarsening is in play.
inline double fine_cost_scale(const SynthConfig& cfg) {
    if (cfg.true_levels == cfg.n_levels) return 1.0;
    return 4.0 / double(cfg.true_levels - 1);
}

inline AgentBatch sample_agents(const SynthConfig& cfg, const StructuralParams& sp, std::size_t n,
                                rng::Engine& g) {
    AgentBatch b;
    b.v.resize(n, cfg.dim_v);
    for (auto& x : b.v.d) x = rng::gaussian(g);
    Mat scores;
    gemm_nt(b.v, sp.W, scores);  // n x true_levels
    b.u0.resize(n);
    std::vector<double> p(cfg.true_levels);
    for (std::size_t i = 0; i < n; ++i) {
        const double* s = scores.row(i);
        double mx = *std::max_element(s, s + cfg.true_levels);
        for (std::size_t w = 0; w < cfg.true_levels; ++w) p[w] = std::exp(s[w] - mx);
        b.u0[i] = int(rng::pick_weighted(g, p.data(), cfg.true_levels));
    }
    b.u_final = b.u0;
    return b;
}

// zeta_row has n_levels entries; agents act on the true grid where each fine
// level carries its group's propensity.
inline int manipulate_one(const SynthConfig& cfg, const double* zeta_row, int u0, rng::Engine& g) {
    std::size_t M = cfg.true_levels;
    std::vector<double> prop(M);
    for (std::size_t w = 0; w < M; ++w) prop[w] = zeta_row[coarsen(w, M, cfg.n_levels)];
    return respond(cfg.mechanism, prop.data(), M, u0, cfg.cost_c, fine_cost_scale(cfg), g);
}

// Fills batch.u_final and stores the published zeta rows.
inline void manipulate(const SynthConfig& cfg, AgentBatch& b, const Mat& zeta, rng::Engine& g) {
    if (zeta.rows != b.size() || zeta.cols != cfg.n_levels)
        throw std::invalid_argument("manipulate: zeta shape mismatch");
    b.zeta = zeta;
    for (std::size_t i = 0; i < b.size(); ++i)
        b.u_final[i] = manipulate_one(cfg, zeta.row(i), b.u0[i], g);
}

inline double oracle_cate(const StructuralParams& sp, int fine_level, const double* v,
                          std::size_t dim_v) {
    double s = sp.beta_u[fine_level];
    for (std::size_t j = 0; j < dim_v; ++j) s += v[j] * sp.beta_v[j];
    return s;
}

// Oracle CATE indexed by the observed group: beta_u averaged over the group.
inline double oracle_cate_coarse(const SynthConfig& cfg, const StructuralParams& sp,
                                 std::size_t group, const double* v) {
    double bu = 0.0;
    std::size_t cnt = 0;
    for (std::size_t w = 0; w < cfg.true_levels; ++w)
        if (coarsen(w, cfg.true_levels, cfg.n_levels) == group) {
            bu += sp.beta_u[w];
            ++cnt;
        }
    bu /= double(cnt);
    double s = bu;
    for (std::size_t j = 0; j < cfg.dim_v; ++j) s += v[j] * sp.beta_v[j];
    return s;
}

// Y(z) = (z + 1) <x, beta> + eps. Requires u_final and z to be set.
inline void realize_outcomes(const SynthConfig& cfg, const StructuralParams& sp, AgentBatch& b,
                             rng::Engine& g) {
    b.y.resize(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) {
        double base = oracle_cate(sp, b.u_final[i], b.v.row(i), cfg.dim_v);
        double eps = cfg.noise_on ? rng::gaussian(g) : 0.0;
        b.y[i] = double(b.z[i] + 1) * base + eps;
    }
}

// Shared across every run of a session: depends only on the structural seed.
inline AgentBatch make_eval_population(const SynthConfig& cfg, const StructuralParams& sp) {
    auto g = rng::make(cfg.structural_seed, "eval");
    return sample_agents(cfg, sp, cfg.eval_size, g);
}

// Adapter the policy-learning loop drives.
class Environment {
public:
    explicit Environment(const SynthConfig& cfg)
        : cfg_(cfg), sp_(make_structural(cfg)), eval_(make_eval_population(cfg, sp_)) {}

    const SynthConfig& config() const { return cfg_; }
    const StructuralParams& structural() const { return sp_; }
    std::size_t n_levels() const { return cfg_.n_levels; }
    std::size_t dim_v() const { return cfg_.dim_v; }
    std::size_t batch_size() const { return cfg_.batch_size; }

    AgentBatch draw(std::size_t, rng::Engine& g) const {
        return sample_agents(cfg_, sp_, cfg_.batch_size, g);
    }
    void manipulate(AgentBatch& b, const Mat& zeta, rng::Engine& g) const {
        synth::manipulate(cfg_, b, zeta, g);
    }
    int observed(int fine) const { return int(coarsen(fine, cfg_.true_levels, cfg_.n_levels)); }
    double oracle_tau(const AgentBatch& b, std::size_t i, int u) const {
        return oracle_cate(sp_, u, b.v.row(i), cfg_.dim_v);
    }
    // Oracle on the observed grid, for the cutoff rule and oracle-CATE runs.
    double oracle_tau_observed(const AgentBatch& b, std::size_t i, int group) const {
        return oracle_cate_coarse(cfg_, sp_, std::size_t(group), b.v.row(i));
    }
    void outcomes(AgentBatch& b, rng::Engine& g) const { realize_outcomes(cfg_, sp_, b, g); }
    const AgentBatch& eval_population() const { return eval_; }
    std::size_t true_levels() const { return cfg_.true_levels; }
    // One fine step expressed in observed-grid units.
    double move_scale() const { return double(cfg_.n_levels) / double(cfg_.true_levels); }
    std::uint64_t eval_seed() const { return cfg_.structural_seed; }
    // Ground-truth effect on the observed grid as a (level, v) function.
    std::function<double(int, const double*)> cate_oracle() const {
        const SynthConfig* cfg = &cfg_;
        const StructuralParams* sp = &sp_;
        return [cfg, sp](int group, const double* v) {
            return oracle_cate_coarse(*cfg, *sp, std::size_t(group), v);
        };
    }

private:
    SynthConfig cfg_;
    StructuralParams sp_;
    AgentBatch eval_;
};

// ---- piecewise-constant policies over continuous u in [0,1] ----

struct PiecewisePolicy {
    std::vector<double> knots;   // strictly increasing, inside (0,1)
    std::vector<double> levels;  // knots.size()+1 propensities, right-continuous at knots
};

inline double piecewise_at(const PiecewisePolicy& p, double u) {
    std::size_t j = 0;
    while (j < p.knots.size() && u >= p.knots[j]) ++j;
    return p.levels[j];
}

// Utility-maximising response restricted to the candidate set
// {u0} u {knots} u {knot - eps_u}: the only points a mover can prefer.
inline double piecewise_policy_response(const PiecewisePolicy& p, double u0, double cost_c,
                                        double eps_u = 1e-3) {
    double best = u0;
    double best_util = piecewise_at(p, u0);
    auto consider = [&](double u) {
        if (u < 0.0 || u > 1.0) return;
        double util = piecewise_at(p, u) - cost_c * std::abs(u - u0);
        if (util > best_util ||
            (util == best_util && std::abs(u - u0) < std::abs(best - u0)) ||
            (util == best_util && std::abs(u - u0) == std::abs(best - u0) && u < best)) {
            best = u;
            best_util = util;
        }
    };
    for (double k : p.knots) {
        consider(k);
        consider(k - eps_u);
    }
    return best;
}

}  // namespace spg::synth
