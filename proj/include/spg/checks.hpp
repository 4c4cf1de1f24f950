#pragma once

// Self-contained verification suites behind the `check` verb. Each check
// returns pass/fail plus a one-line measurement so failures are diagnosable
// from the printed output alone. The acceptance suite calls the same
// functions, so the CLI and the test binary cannot drift apart.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "spg/behavior.hpp"
#include "spg/synth_env.hpp"
#include "spg/mechanism.hpp"
#include "spg/nn.hpp"
#include "spg/policy.hpp"
#include "spg/rng.hpp"
#include "spg/theory.hpp"

namespace spg::harness::checks {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

namespace detail {

inline std::string fmt(const char* f, double a, double b = 0, double c = 0) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

inline std::vector<double> flatten_grads(const nn::Grads& g) {
    std::vector<double> v;
    for (std::size_t l = 0; l < g.w.size(); ++l) {
        v.insert(v.end(), g.w[l].d.begin(), g.w[l].d.end());
        v.insert(v.end(), g.b[l].begin(), g.b[l].end());
    }
    return v;
}

}  // namespace detail

// Analytic parameter gradient of the weighted evaluation-vector sum against
// central differences.
inline CheckResult policy_gradient_check() {
    auto g = rng::make(42, "check_policy_grad");
    const std::size_t K = 3, dv = 4, n = 6;
    nn::Mlp net = policy::make(K, dv, {6}, g);
    Mat v(n, dv), coef(n, K);
    for (auto& x : v.d) x = rng::gaussian(g);
    for (auto& x : coef.d) x = rng::gaussian(g);
    nn::Grads grads;
    grads.init(net);
    grads.zero();
    policy::zeta_backward_weighted(net, v, K, coef, grads);
    auto analytic = detail::flatten_grads(grads);
    auto f = [&](const std::vector<double>& flat) {
        nn::Mlp m = net;
        nn::unflatten(m, flat);
        Mat z = policy::zeta(m, v, K);
        double s = 0.0;
        for (std::size_t i = 0; i < z.d.size(); ++i) s += z.d[i] * coef.d[i];
        return s;
    };
    auto fd = theory::finite_difference(f, nn::flatten(net));
    double err = theory::max_rel_err(analytic, fd);
    return {"gradient/policy-params", err <= 1e-4,
            detail::fmt("max rel err %.3g (tol 1e-4)", err)};
}

// d log q~ / d zeta of the behavior model against per-slot differences.
inline CheckResult behavior_zeta_gradient_check() {
    auto g = rng::make(42, "check_zeta_grad");
    const std::size_t K = 4, dv = 3, n = 5;
    behavior::Config bc;
    bc.hidden = {6, 5};
    behavior::ZetaModel model(K, dv, bc, g);
    Mat zeta(n, K), v(n, dv);
    for (auto& x : zeta.d) x = rng::uniform(g, 0.05, 0.95);
    for (auto& x : v.d) x = rng::gaussian(g);
    std::vector<int> u(n);
    for (auto& x : u) x = int(rng::uniform(g, 0.0, double(K)));
    Mat dz;
    model.grad_log_zeta(zeta, v, u, dz);
    double worst = 0.0;
    const double h = 1e-6;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t w = 0; w < K; ++w) {
            Mat zp = zeta, zm = zeta;
            zp(i, w) += h;
            zm(i, w) -= h;
            Mat qp, qm;
            model.predict(zp, v, qp);
            model.predict(zm, v, qm);
            double fd = (std::log(qp(i, std::size_t(u[i]))) -
                         std::log(qm(i, std::size_t(u[i])))) /
                        (2.0 * h);
            double denom = std::max({1e-8, std::abs(fd), std::abs(dz(i, w))});
            worst = std::max(worst, std::abs(fd - dz(i, w)) / denom);
        }
    }
    return {"gradient/log-q-zeta", worst <= 1e-3, detail::fmt("max rel err %.3g (tol 1e-3)", worst)};
}

// d log q~ / d theta of the parameter-reading behavior model.
inline CheckResult behavior_theta_gradient_check() {
    auto g = rng::make(42, "check_theta_grad");
    const std::size_t K = 3, P = 7, dv = 2, n = 5;
    behavior::Config bc;
    bc.hidden = {6};
    behavior::ThetaModel model(K, P, dv, bc, g);
    std::vector<double> theta(P);
    for (auto& x : theta) x = rng::gaussian(g);
    Mat v(n, dv);
    for (auto& x : v.d) x = rng::gaussian(g);
    std::vector<int> u(n);
    for (auto& x : u) x = int(rng::uniform(g, 0.0, double(K)));
    std::vector<double> coef(n);
    for (auto& x : coef) x = rng::gaussian(g);
    std::vector<double> analytic;
    model.grad_log_theta(theta, v, u, coef, analytic);
    auto f = [&](const std::vector<double>& th) {
        Mat q;
        model.predict(th, v, q);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            s += coef[i] * std::log(q(i, std::size_t(u[i])));
        return s;
    };
    auto fd = theory::finite_difference(f, theta, 1e-6);
    double err = theory::max_rel_err(analytic, fd);
    return {"gradient/log-q-theta", err <= 1e-3, detail::fmt("max rel err %.3g (tol 1e-3)", err)};
}

// Cross-entropy parameter gradient of a softmax net (the behavior training
// path) against central differences.
inline CheckResult softmax_net_gradient_check() {
    auto g = rng::make(42, "check_softmax_grad");
    const std::size_t in = 6, K = 4, n = 5;
    nn::Mlp net = nn::make_mlp({in, 5, K}, nn::Output::softmax, g);
    Mat X(n, in);
    for (auto& x : X.d) x = rng::gaussian(g);
    std::vector<int> u(n);
    for (auto& x : u) x = int(rng::uniform(g, 0.0, double(K)));
    nn::Cache c;
    const Mat& q = nn::forward(net, X, c);
    Mat dLogits(n, K);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < K; ++j)
            dLogits(i, j) = q(i, j) - (std::size_t(u[i]) == j ? 1.0 : 0.0);
    nn::Grads grads;
    grads.init(net);
    grads.zero();
    nn::backward(net, c, dLogits, grads, nn::Seed::logits);
    // gradient of the NEGATIVE log likelihood, so compare against -sum log q
    auto f = [&](const std::vector<double>& flat) {
        nn::Mlp m = net;
        nn::unflatten(m, flat);
        nn::Cache cc;
        const Mat& qq = nn::forward(m, X, cc);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s -= std::log(qq(i, std::size_t(u[i])));
        return s;
    };
    auto fd = theory::finite_difference(f, nn::flatten(net));
    double err = theory::max_rel_err(detail::flatten_grads(grads), fd);
    return {"gradient/softmax-net", err <= 1e-4, detail::fmt("max rel err %.3g (tol 1e-4)", err)};
}

inline std::vector<CheckResult> gradient_checks() {
    return {policy_gradient_check(), behavior_zeta_gradient_check(),
            behavior_theta_gradient_check(), softmax_net_gradient_check()};
}

// Gradient deviation of two kernel-expansion scores against the
// norm-distance bound, over random pairs.
inline CheckResult smoothness_check(std::size_t pairs = 1000) {
    auto g = rng::make(42, "check_smoothness");
    const std::size_t d = 3;
    const double sigma = 0.5;
    double worst = 0.0;
    std::size_t degenerate = 0;
    for (std::size_t p = 0; p < pairs; ++p) {
        auto f1 = theory::random_rkhs(d, 5, sigma, g);
        auto f2 = theory::random_rkhs(d, 5, sigma, g);
        std::vector<std::vector<double>> pts(20, std::vector<double>(d));
        for (auto& z : pts)
            for (auto& x : z) x = rng::uniform(g, 0.0, 1.0);
        auto r = theory::lemma1_check(f1, f2, pts);
        worst = std::max(worst, r.max_ratio);
        degenerate += r.degenerate;
    }
    bool pass = worst <= 1.0 + 1e-8;
    return {"smoothness-bound", pass,
            detail::fmt("max gap/bound %.12f over %g pairs", worst, double(pairs))};
}

// Piecewise-policy responses land on the candidate set and are within the
// resolution slack of a brute-force grid search.
inline CheckResult movement_check(std::size_t policies = 1000, std::size_t u0s_per = 10) {
    auto g = rng::make(42, "check_movement");
    const double eps_u = 1e-3, grid = 1e-4;
    std::size_t instances = 0, movers = 0, off = 0;
    double worst_excess_ratio = 0.0;
    for (std::size_t p = 0; p < policies; ++p) {
        synth::PiecewisePolicy pol;
        std::size_t nk = 1 + std::size_t(rng::uniform(g, 0.0, 4.0));
        if (nk > 4) nk = 4;
        for (std::size_t k = 0; k < nk; ++k) pol.knots.push_back(rng::uniform(g, 0.05, 0.95));
        std::sort(pol.knots.begin(), pol.knots.end());
        pol.knots.erase(std::unique(pol.knots.begin(), pol.knots.end()), pol.knots.end());
        pol.levels.resize(pol.knots.size() + 1);
        for (auto& x : pol.levels) x = rng::uniform(g, 0.0, 1.0);
        double cost_c = rng::uniform(g, 0.05, 0.3);
        std::vector<double> u0s(u0s_per);
        for (auto& x : u0s) x = rng::uniform(g, 0.0, 1.0);
        auto r = theory::prop2_check(pol, u0s, cost_c, eps_u, grid);
        instances += r.instances;
        movers += r.movers;
        off += r.off_candidate;
        double slack = cost_c * eps_u + 1e-12;
        worst_excess_ratio = std::max(worst_excess_ratio, r.max_excess / slack);
    }
    bool pass = off == 0 && worst_excess_ratio <= 1.0;
    return {"movement-support", pass,
            detail::fmt("movers %g/%g off-candidate %g", double(movers), double(instances),
                        double(off)) +
                detail::fmt(", worst excess %.3g of slack", worst_excess_ratio)};
}

inline std::vector<CheckResult> count_checks() {
    std::vector<CheckResult> out;
    std::size_t a = nn::param_count({25, 50, 1});
    out.push_back({"params/synthetic-policy", a == 1351,
                   detail::fmt("[25,50,1] -> %g (want 1351)", double(a))});
    std::size_t b = nn::param_count({65, 130, 130, 1});
    out.push_back({"params/loan-policy", b == 25741,
                   detail::fmt("[65,130,130,1] -> %g (want 25741)", double(b))});
    return out;
}

// sum_u q~(u) grad_zeta log q~(u) must cancel exactly: the floored
// distribution keeps the score identity.
inline CheckResult identity_check() {
    auto g = rng::make(42, "check_identity");
    const std::size_t K = 5, dv = 4, n = 40;
    behavior::Config bc;
    bc.hidden = {8, 6};
    behavior::ZetaModel model(K, dv, bc, g);
    Mat zeta(n, K), v(n, dv);
    for (auto& x : zeta.d) x = rng::uniform(g, 0.0, 1.0);
    for (auto& x : v.d) x = rng::gaussian(g);
    Mat q;
    model.predict(zeta, v, q);
    Mat acc(n, K);
    acc.zero();
    for (std::size_t w = 0; w < K; ++w) {
        std::vector<int> u(n, int(w));
        Mat dz;
        model.grad_log_zeta(zeta, v, u, dz);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < K; ++j) acc(i, j) += q(i, w) * dz(i, j);
    }
    double worst = 0.0;
    for (double x : acc.d) worst = std::max(worst, std::abs(x));
    return {"score-identity", worst <= 1e-6, detail::fmt("max |sum| %.3g (tol 1e-6)", worst)};
}

// Behavior-model error against the true response distribution should not
// grow as the sample grows (averaged over refits).
inline CheckResult trend_check() {
    const std::size_t K = 4;
    const double cost_c = 0.12, temp = 5.0;
    auto truth = [&](const double* zeta, int u0, double* p) {
        double mx = -1e300;
        std::vector<double> util(K);
        for (std::size_t w = 0; w < K; ++w) {
            util[w] = zeta[w] - cost_c * std::abs(double(w) - double(u0));
            mx = std::max(mx, util[w]);
        }
        double s = 0.0;
        for (std::size_t w = 0; w < K; ++w) {
            p[w] = std::exp(temp * (util[w] - mx));
            s += p[w];
        }
        for (std::size_t w = 0; w < K; ++w) p[w] /= s;
    };
    auto gen = [&](std::size_t n, rng::Engine& g, Mat& zeta, Mat& v, std::vector<int>& u) {
        zeta.resize(n, K);
        v.resize(n, K);  // features carry the starting level one-hot
        v.zero();
        u.resize(n);
        std::vector<double> p(K);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t w = 0; w < K; ++w) zeta(i, w) = rng::uniform(g, 0.0, 1.0);
            int u0 = int(rng::uniform(g, 0.0, double(K)));
            v(i, std::size_t(u0)) = 1.0;
            truth(zeta.row(i), u0, p.data());
            u[i] = int(rng::pick_weighted(g, p.data(), K));
        }
    };
    const std::size_t sizes[3] = {500, 2000, 8000};
    double err[3] = {0, 0, 0};
    const std::size_t reps = 3;
    for (std::size_t rep = 0; rep < reps; ++rep) {
        auto gh = rng::make(40 + rep, "check_trend_holdout");
        Mat hz, hv;
        std::vector<int> hu;
        gen(500, gh, hz, hv, hu);
        for (std::size_t si = 0; si < 3; ++si) {
            auto g = rng::make(40 + rep, "check_trend", si);
            behavior::Config bc;
            bc.hidden = {24, 24};
            bc.lr = 0.1;
            behavior::ZetaModel model(K, K, bc, g);
            Mat tz, tv;
            std::vector<int> tu;
            gen(sizes[si], g, tz, tv, tu);
            model.add(tz, tv, tu);
            model.train(g);
            Mat q;
            model.predict(hz, hv, q);
            double e = 0.0;
            std::vector<double> p(K);
            for (std::size_t i = 0; i < hz.rows; ++i) {
                int u0 = 0;
                for (std::size_t w = 0; w < K; ++w)
                    if (hv(i, w) > 0.5) u0 = int(w);
                truth(hz.row(i), u0, p.data());
                for (std::size_t w = 0; w < K; ++w) e += std::abs(p[w] - q(i, w));
            }
            err[si] += e / (double(hz.rows) * double(K)) / double(reps);
        }
    }
    bool pass = err[1] <= err[0] + 0.01 && err[2] <= err[1] + 0.01 && err[2] < err[0];
    return {"fit-trend", pass,
            detail::fmt("mean |p-q| %.4f -> %.4f -> %.4f over n=500,2000,8000", err[0], err[1],
                        err[2])};
}

inline std::vector<CheckResult> run_group(const std::string& which) {
    std::vector<CheckResult> out;
    auto want = [&](const char* name) { return which == "all" || which == name; };
    if (want("gradients"))
        for (auto& c : gradient_checks()) out.push_back(std::move(c));
    if (want("smoothness")) out.push_back(smoothness_check());
    if (want("movement")) out.push_back(movement_check());
    if (want("counts"))
        for (auto& c : count_checks()) out.push_back(std::move(c));
    if (want("identity")) out.push_back(identity_check());
    if (want("trend")) out.push_back(trend_check());
    return out;
}

inline int print_results(const std::vector<CheckResult>& rs, std::ostream& out) {
    int bad = 0;
    for (const auto& r : rs) {
        out << (r.pass ? "PASS " : "FAIL ") << r.name << " - " << r.detail << "\n";
        if (!r.pass) ++bad;
    }
    out << (bad ? "some checks failed" : "all checks passed") << " (" << rs.size() - bad << "/"
        << rs.size() << ")\n";
    return bad ? 1 : 0;
}

}  // namespace spg::harness::checks
