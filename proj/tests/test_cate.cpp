#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "spg/cate.hpp"
#include "spg/synth_env.hpp"

using namespace spg;

namespace {

// Rows drawn from a ground truth inside the S-learner span:
// y = [one-hot part] + <v, b> + z * (effect(level) + <v, d>).
struct LinearTruth {
    std::vector<double> bu{-2.0, -0.5, 0.0, 1.5, 3.0};
    std::vector<double> bv{0.7, -1.2, 0.4};
    double tau(int level, const double* v) const {
        double s = bu[std::size_t(level)];
        for (std::size_t j = 0; j < bv.size(); ++j) s += v[j] * bv[j];
        return s;
    }
};

std::vector<cate::Obs> draw_linear(const LinearTruth& t, std::size_t n, rng::Engine& g) {
    std::vector<cate::Obs> rows(n);
    for (auto& r : rows) {
        r.level = int(rng::uniform(g, 0.0, 5.0));
        r.v.resize(3);
        for (auto& x : r.v) x = rng::gaussian(g);
        r.z = rng::uniform(g) < 0.5;
        double base = t.tau(r.level, r.v.data());
        r.y = double(r.z + 1) * base;  // noiseless
    }
    return rows;
}

}  // namespace

TEST_CASE("design row layout") {
    // K=2, dv=2, p = 2*(2+2)+1 = 9: [onehot, v, z*onehot, z*v, z]
    double x[9];
    std::vector<double> v{3.0, 4.0};
    cate::detail::design_row(1, v.data(), 0, 2, 2, x);
    std::vector<double> want0{0, 1, 3, 4, 0, 0, 0, 0, 0};
    CHECK(std::vector<double>(x, x + 9) == want0);
    cate::detail::design_row(0, v.data(), 1, 2, 2, x);
    std::vector<double> want1{1, 0, 3, 4, 1, 0, 3, 4, 1};
    CHECK(std::vector<double>(x, x + 9) == want1);
}

TEST_CASE("cholesky solver on a hand-checkable system") {
    // A = [[4,2],[2,3]], b = [10, 9] -> x = [3/2, 2] at ridge 0
    Mat A(2, 2);
    A(0, 0) = 4;
    A(0, 1) = 2;
    A(1, 0) = 2;
    A(1, 1) = 3;
    auto x = cate::detail::cholesky_solve(A, {10.0, 9.0}, 0.0);
    CHECK(x[0] == Catch::Approx(1.5).epsilon(1e-12));
    CHECK(x[1] == Catch::Approx(2.0).epsilon(1e-12));
    // non-positive-definite after zeroing: throws
    Mat Z(2, 2);
    CHECK_THROWS_AS(cate::detail::cholesky_solve(Z, {1.0, 1.0}, 0.0), std::runtime_error);
}

TEST_CASE("linear backend recovers an in-span effect exactly") {
    LinearTruth t;
    auto g = rng::make(31, "cate_linear");
    auto rows = draw_linear(t, 5000, g);
    cate::LinearCate model(5, 3);
    model.absorb(rows, g);
    double worst = 0.0;
    for (int rep = 0; rep < 500; ++rep) {
        int level = int(rng::uniform(g, 0.0, 5.0));
        std::vector<double> v{rng::gaussian(g), rng::gaussian(g), rng::gaussian(g)};
        worst = std::max(worst, std::abs(model.predict(level, v.data()) - t.tau(level, v.data())));
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("linear backend incremental absorb equals one-shot fit") {
    LinearTruth t;
    auto g1 = rng::make(32, "cate_inc");
    auto rows = draw_linear(t, 1200, g1);
    std::vector<cate::Obs> a(rows.begin(), rows.begin() + 500);
    std::vector<cate::Obs> b(rows.begin() + 500, rows.end());
    cate::LinearCate inc(5, 3), once(5, 3);
    inc.absorb(a, g1);
    inc.absorb(b, g1);
    once.absorb(rows, g1);
    CHECK(inc.rows_seen() == once.rows_seen());
    for (int rep = 0; rep < 100; ++rep) {
        int level = rep % 5;
        std::vector<double> v{rng::gaussian(g1), rng::gaussian(g1), rng::gaussian(g1)};
        CHECK(inc.predict(level, v.data()) == once.predict(level, v.data()));
    }
}

TEST_CASE("linear backend predicts zero before it has data to fit") {
    cate::LinearCate model(5, 3);
    std::vector<double> v{1.0, 2.0, 3.0};
    CHECK(model.predict(2, v.data()) == 0.0);
    auto g = rng::make(1, "x");
    std::vector<cate::Obs> one{{1, {0.1, 0.2, 0.3}, 1, 2.0}};
    model.absorb(one, g);  // single row: still below the fit threshold
    CHECK(model.predict(2, v.data()) == 0.0);
}

TEST_CASE("linear backend tracks the oracle on simulated environment data") {
    synth::SynthConfig cfg;
    cfg.batch_size = 3000;
    cfg.eval_size = 200;
    synth::Environment env(cfg);
    auto g = rng::make(33, "cate_env");
    cate::LinearCate model(cfg.n_levels, cfg.dim_v);
    for (int epoch = 0; epoch < 3; ++epoch) {
        auto b = env.draw(epoch, g);
        Mat zeta(b.size(), cfg.n_levels);
        for (auto& x : zeta.d) x = rng::uniform(g);
        env.manipulate(b, zeta, g);
        b.z.resize(b.size());
        for (auto& z : b.z) z = rng::uniform(g) < 0.5;
        env.outcomes(b, g);
        std::vector<cate::Obs> rows(b.size());
        for (std::size_t i = 0; i < b.size(); ++i) {
            rows[i].level = env.observed(b.u_final[i]);
            rows[i].v.assign(b.v.row(i), b.v.row(i) + cfg.dim_v);
            rows[i].z = b.z[i];
            rows[i].y = b.y[i];
        }
        model.absorb(rows, g);
    }
    const auto& ev = env.eval_population();
    double mae = 0.0;
    for (std::size_t i = 0; i < ev.size(); ++i) {
        int group = env.observed(ev.u0[i]);
        mae += std::abs(model.predict(group, ev.v.row(i)) -
                        env.oracle_tau_observed(ev, i, group)) /
               double(ev.size());
    }
    CHECK(mae < 0.15);
}

TEST_CASE("boosted backend learns a curved effect") {
    auto g = rng::make(34, "cate_boost");
    auto tau = [](int level, const double* v) {
        return 3.0 * std::sin(v[0]) + 2.0 * std::abs(v[1]) + double(level);
    };
    std::vector<cate::Obs> rows(20000);
    for (auto& r : rows) {
        r.level = int(rng::uniform(g, 0.0, 5.0));
        r.v.resize(4);
        for (auto& x : r.v) x = rng::gaussian(g);
        r.z = rng::uniform(g) < 0.5;
        double base = r.v[0] + r.v[2];  // untreated surface
        r.y = base + double(r.z) * tau(r.level, r.v.data());
    }
    cate::BoostedCate model(5, 4);
    model.absorb(rows, g);
    CHECK(model.tree_count() == 200);
    double ss_res = 0.0, ss_tot = 0.0, mean = 0.0;
    std::vector<cate::Obs> test = rows;  // fresh draws
    test.resize(2000);
    for (auto& r : test) {
        r.level = int(rng::uniform(g, 0.0, 5.0));
        for (auto& x : r.v) x = rng::gaussian(g);
    }
    for (const auto& r : test) mean += tau(r.level, r.v.data()) / 2000.0;
    for (const auto& r : test) {
        double truth = tau(r.level, r.v.data());
        double err = model.predict(r.level, r.v.data()) - truth;
        ss_res += err * err;
        ss_tot += (truth - mean) * (truth - mean);
    }
    CHECK(1.0 - ss_res / ss_tot > 0.8);
}

TEST_CASE("boosted backend freezes once the tree budget is spent") {
    auto g = rng::make(35, "cate_freeze");
    LinearTruth t;
    auto first = draw_linear(t, 400, g);
    cate::BoostedCate model(5, 3, 30, 3, 0.1, 30, 400);
    model.absorb(first, g);
    CHECK(model.tree_count() == 30);
    std::vector<double> probe{0.3, -0.7, 1.1};
    double before = model.predict(2, probe.data());
    auto more = draw_linear(t, 400, g);
    model.absorb(more, g);
    CHECK(model.tree_count() == 30);             // no growth past the cap
    CHECK(model.predict(2, probe.data()) == before);  // predictions frozen
    CHECK(model.rows_seen() == 800);             // bookkeeping still counts
}

TEST_CASE("boosted backend spreads trees across refits") {
    auto g = rng::make(36, "cate_spread");
    LinearTruth t;
    cate::BoostedCate model(5, 3, 200, 3, 0.1, 7, 400);
    model.absorb(draw_linear(t, 300, g), g);
    CHECK(model.tree_count() == 7);
    model.absorb(draw_linear(t, 300, g), g);
    CHECK(model.tree_count() == 14);
}

TEST_CASE("oracle backend relays the supplied function and ignores data") {
    auto tau = [](int level, const double* v) { return double(level) * 10.0 + v[0]; };
    cate::OracleCate model(tau);
    std::vector<double> v{0.25};
    CHECK(model.predict(3, v.data()) == 30.25);
    auto g = rng::make(1, "x");
    std::vector<cate::Obs> junk{{0, {9.0}, 1, 123.0}};
    model.absorb(junk, g);
    CHECK(model.predict(3, v.data()) == 30.25);
    CHECK(model.backend() == cate::Backend::oracle);
}

TEST_CASE("factory builds the requested backend") {
    auto tau = [](int, const double*) { return 1.0; };
    auto a = cate::make_model(cate::Backend::oracle, 5, 3, tau);
    auto b = cate::make_model(cate::Backend::linear, 5, 3, tau);
    auto c = cate::make_model(cate::Backend::boosted, 5, 3, tau, 1e-6, 7);
    CHECK(a->backend() == cate::Backend::oracle);
    CHECK(b->backend() == cate::Backend::linear);
    CHECK(c->backend() == cate::Backend::boosted);
    // trees_per_refit is honored by the factory
    auto g = rng::make(37, "cate_factory");
    LinearTruth t;
    auto* boosted = dynamic_cast<cate::BoostedCate*>(c.get());
    REQUIRE(boosted != nullptr);
    boosted->absorb(draw_linear(t, 300, g), g);
    CHECK(boosted->tree_count() == 7);
}
