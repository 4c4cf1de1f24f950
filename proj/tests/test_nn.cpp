#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>

#include "spg/nn.hpp"
#include "spg/theory.hpp"

using namespace spg;

namespace {

// Scalar loss sum_ij C_ij * out_ij, used as the target for gradient checks.
double weighted_output_loss(nn::Mlp& net, const std::vector<double>& theta, const Mat& X,
                            const Mat& C) {
    nn::unflatten(net, theta);
    nn::Cache cache;
    const Mat& out = nn::forward(net, X, cache);
    double s = 0.0;
    for (std::size_t i = 0; i < out.d.size(); ++i) s += C.d[i] * out.d[i];
    return s;
}

Mat random_mat(std::size_t r, std::size_t c, rng::Engine& g, double sd = 1.0) {
    Mat m(r, c);
    for (auto& x : m.d) x = rng::gaussian(g, 0.0, sd);
    return m;
}

}  // namespace

TEST_CASE("parameter count formula matches element enumeration") {
    auto g = rng::make(11, "dims");
    for (int rep = 0; rep < 8; ++rep) {
        std::size_t n_layers = 2 + std::size_t(rng::uniform(g, 0.0, 3.0));
        std::vector<std::size_t> dims;
        for (std::size_t l = 0; l < n_layers; ++l)
            dims.push_back(1 + std::size_t(rng::uniform(g, 0.0, 40.0)));
        auto net = nn::make_mlp(dims, nn::Output::sigmoid, g);
        std::size_t counted = 0;
        nn::for_each_param(net, [&](double&) { ++counted; });
        REQUIRE(counted == nn::param_count(dims));
    }
    REQUIRE(nn::param_count({25, 50, 1}) == 1351);
    REQUIRE(nn::param_count({65, 130, 130, 1}) == 25741);
}

TEST_CASE("glorot init bounds, zero biases, seed determinism") {
    auto g1 = rng::make(3, "init");
    auto net = nn::make_mlp({12, 30, 4}, nn::Output::softmax, g1);
    for (std::size_t l = 0; l < net.layers(); ++l) {
        double r = std::sqrt(6.0 / double(net.dims[l] + net.dims[l + 1]));
        for (double x : net.w[l].d) REQUIRE(std::abs(x) <= r);
        for (double x : net.b[l]) REQUIRE(x == 0.0);
    }
    auto g2 = rng::make(3, "init");
    auto net2 = nn::make_mlp({12, 30, 4}, nn::Output::softmax, g2);
    REQUIRE(nn::flatten(net) == nn::flatten(net2));
    auto g3 = rng::make(4, "init");
    auto net3 = nn::make_mlp({12, 30, 4}, nn::Output::softmax, g3);
    REQUIRE(nn::flatten(net) != nn::flatten(net3));
}

TEST_CASE("sigmoid outputs stay strictly inside (0,1)") {
    auto g = rng::make(5, "sig");
    auto net = nn::make_mlp({6, 10, 1}, nn::Output::sigmoid, g);
    // scale weights up to force saturation
    nn::for_each_param(net, [](double& x) { x *= 400.0; });
    Mat X = random_mat(64, 6, g, 3.0);
    nn::Cache c;
    const Mat& out = nn::forward(net, X, c);
    for (double v : out.d) {
        REQUIRE(v > 0.0);
        REQUIRE(v < 1.0);
    }
}

TEST_CASE("softmax rows are simplex points and shift-invariant") {
    auto g = rng::make(6, "sm");
    for (int rep = 0; rep < 20; ++rep) {
        std::size_t n = 2 + std::size_t(rng::uniform(g, 0.0, 9.0));
        std::vector<double> z(n), zs(n);
        for (std::size_t i = 0; i < n; ++i) z[i] = rng::gaussian(g, 0.0, 5.0);
        double shift = rng::gaussian(g, 0.0, 50.0);
        for (std::size_t i = 0; i < n; ++i) zs[i] = z[i] + shift;
        nn::softmax_row(z.data(), n);
        nn::softmax_row(zs.data(), n);
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            REQUIRE(z[i] >= 0.0);
            REQUIRE(std::abs(z[i] - zs[i]) < 1e-12);
            sum += z[i];
        }
        REQUIRE(std::abs(sum - 1.0) < 1e-9);
    }
    // all-equal scores degenerate to uniform
    std::vector<double> flat(7, 3.25);
    nn::softmax_row(flat.data(), 7);
    for (double v : flat) REQUIRE(std::abs(v - 1.0 / 7.0) < 1e-12);
}

TEST_CASE("batched forward equals row-by-row forward bitwise") {
    auto g = rng::make(7, "batch");
    auto net = nn::make_mlp({9, 14, 3}, nn::Output::softmax, g);
    Mat X = random_mat(17, 9, g);
    nn::Cache c;
    const Mat& out = nn::forward(net, X, c);
    for (std::size_t i = 0; i < X.rows; ++i) {
        std::vector<double> row(X.row(i), X.row(i) + X.cols);
        auto single = nn::forward_one(net, row);
        for (std::size_t j = 0; j < 3; ++j) REQUIRE(single[j] == out(i, j));
    }
}

TEST_CASE("parameter gradients match central finite differences") {
    struct Case {
        std::vector<std::size_t> dims;
        nn::Output out;
    };
    std::vector<Case> cases = {{{7, 11, 1}, nn::Output::sigmoid},
                               {{6, 9, 2}, nn::Output::identity},
                               {{5, 8, 4}, nn::Output::softmax}};
    for (const auto& cse : cases) {
        auto g = rng::make(13, "fd");
        auto net = nn::make_mlp(cse.dims, cse.out, g);
        Mat X = random_mat(5, cse.dims.front(), g);
        Mat C = random_mat(5, cse.dims.back(), g);
        auto theta0 = nn::flatten(net);

        nn::Cache cache;
        nn::forward(net, X, cache);
        nn::Grads grads;
        grads.init(net);
        nn::backward(net, cache, C, grads, nn::Seed::post_activation);
        std::vector<double> analytic;
        nn::for_each_param(net, grads, [&](double&, double gk) { analytic.push_back(gk); });

        auto fd = theory::finite_difference(
            [&](const std::vector<double>& th) { return weighted_output_loss(net, th, X, C); },
            theta0, 1e-5);
        nn::unflatten(net, theta0);
        REQUIRE(theory::max_rel_err(analytic, fd) < 1e-6);
    }
}

TEST_CASE("input gradients match central finite differences") {
    auto g = rng::make(17, "fdin");
    auto net = nn::make_mlp({6, 12, 2}, nn::Output::sigmoid, g);
    Mat X = random_mat(3, 6, g);
    Mat C = random_mat(3, 2, g);

    nn::Cache cache;
    nn::forward(net, X, cache);
    nn::Grads grads;
    grads.init(net);
    nn::backward(net, cache, C, grads, nn::Seed::post_activation, true);

    std::vector<double> flat_in(X.d.begin(), X.d.end());
    auto fd = theory::finite_difference(
        [&](const std::vector<double>& xin) {
            Mat Xm(3, 6);
            Xm.d = xin;
            nn::Cache cc;
            const Mat& out = nn::forward(net, Xm, cc);
            double s = 0.0;
            for (std::size_t i = 0; i < out.d.size(); ++i) s += C.d[i] * out.d[i];
            return s;
        },
        flat_in, 1e-5);
    std::vector<double> analytic(grads.input.d.begin(), grads.input.d.end());
    REQUIRE(theory::max_rel_err(analytic, fd) < 1e-6);
}

TEST_CASE("logit-seeded backward matches finite differences of cross-entropy") {
    auto g = rng::make(19, "ce");
    auto net = nn::make_mlp({5, 9, 4}, nn::Output::softmax, g);
    Mat X = random_mat(6, 5, g);
    std::vector<std::size_t> labels = {0, 3, 1, 2, 3, 0};
    auto theta0 = nn::flatten(net);

    nn::Cache cache;
    const Mat& q = nn::forward(net, X, cache);
    Mat dlogits(6, 4);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            dlogits(i, j) = q(i, j) - (j == labels[i] ? 1.0 : 0.0);
    nn::Grads grads;
    grads.init(net);
    nn::backward(net, cache, dlogits, grads, nn::Seed::logits);
    std::vector<double> analytic;
    nn::for_each_param(net, grads, [&](double&, double gk) { analytic.push_back(gk); });

    auto fd = theory::finite_difference(
        [&](const std::vector<double>& th) {
            nn::unflatten(net, th);
            nn::Cache cc;
            const Mat& qq = nn::forward(net, X, cc);
            double s = 0.0;
            for (std::size_t i = 0; i < 6; ++i) s += -std::log(qq(i, labels[i]));
            return s;
        },
        theta0, 1e-5);
    nn::unflatten(net, theta0);
    REQUIRE(theory::max_rel_err(analytic, fd) < 1e-6);
}

TEST_CASE("batch backward equals sum of per-row backwards") {
    auto g = rng::make(23, "sum");
    auto net = nn::make_mlp({8, 13, 2}, nn::Output::sigmoid, g);
    Mat X = random_mat(9, 8, g);
    Mat C = random_mat(9, 2, g);

    nn::Cache cache;
    nn::forward(net, X, cache);
    nn::Grads whole;
    whole.init(net);
    nn::backward(net, cache, C, whole, nn::Seed::post_activation);

    nn::Grads accum;
    accum.init(net);
    for (std::size_t i = 0; i < X.rows; ++i) {
        Mat Xi(1, 8), Ci(1, 2);
        std::copy(X.row(i), X.row(i) + 8, Xi.d.begin());
        std::copy(C.row(i), C.row(i) + 2, Ci.d.begin());
        nn::Cache ci;
        nn::forward(net, Xi, ci);
        nn::backward(net, ci, Ci, accum, nn::Seed::post_activation);
    }
    std::vector<double> a, b;
    nn::for_each_param(net, whole, [&](double&, double gk) { a.push_back(gk); });
    nn::for_each_param(net, accum, [&](double&, double gk) { b.push_back(gk); });
    REQUIRE(theory::max_rel_err(a, b) < 1e-11);
}

namespace {

// One-weight net driving the optimizer; bias gradient kept at zero.
struct ScalarRig {
    nn::Mlp net;
    nn::Grads grads;
    ScalarRig(double w0) {
        auto g = rng::make(1, "rig");
        net = nn::make_mlp({1, 1}, nn::Output::identity, g);
        net.w[0](0, 0) = w0;
        net.b[0][0] = 0.0;
        grads.init(net);
    }
    void step(nn::Optimizer& opt, double gw, int dir) {
        grads.w[0](0, 0) = gw;
        grads.b[0][0] = 0.0;
        opt.step(net, grads, dir);
    }
    double w() const { return net.w[0](0, 0); }
};

}  // namespace

TEST_CASE("sgd steps match hand-derived updates") {
    ScalarRig rig(0.3);
    nn::Optimizer opt(nn::Rule::sgd, 0.1);
    rig.step(opt, 0.5, -1);
    REQUIRE(rig.w() == Catch::Approx(0.3 - 0.1 * 0.5).margin(1e-15));
    rig.step(opt, -0.2, -1);
    REQUIRE(rig.w() == Catch::Approx(0.25 + 0.1 * 0.2).margin(1e-15));

    ScalarRig up(0.3);
    nn::Optimizer opt2(nn::Rule::sgd, 0.1);
    up.step(opt2, 0.5, +1);
    REQUIRE(up.w() == Catch::Approx(0.3 + 0.05).margin(1e-15));
}

TEST_CASE("adam steps match hand-derived updates") {
    // hand-rolled two-step trace, lr 0.1, betas (0.9, 0.999), eps 1e-8
    double eps = 1e-8, lr = 0.1, b1 = 0.9, b2 = 0.999;
    double g1 = 0.5, g2 = -0.2;
    double m1 = (1 - b1) * g1, v1 = (1 - b2) * g1 * g1;
    double w1 = 0.3 - lr * (m1 / (1 - b1)) / (std::sqrt(v1 / (1 - b2)) + eps);
    double m2 = b1 * m1 + (1 - b1) * g2, v2 = b2 * v1 + (1 - b2) * g2 * g2;
    double w2 = w1 - lr * (m2 / (1 - b1 * b1)) / (std::sqrt(v2 / (1 - b2 * b2)) + eps);

    ScalarRig rig(0.3);
    nn::Optimizer opt(nn::Rule::adam, lr, b1, b2, eps);
    rig.step(opt, g1, -1);
    REQUIRE(rig.w() == Catch::Approx(w1).margin(1e-12));
    rig.step(opt, g2, -1);
    REQUIRE(rig.w() == Catch::Approx(w2).margin(1e-12));

    // reduced betas variant used by the wide nets
    double rb1 = 0.5, rb2 = 0.9;
    double rm1 = (1 - rb1) * g1, rv1 = (1 - rb2) * g1 * g1;
    double rw1 = 0.3 - lr * (rm1 / (1 - rb1)) / (std::sqrt(rv1 / (1 - rb2)) + eps);
    ScalarRig rig2(0.3);
    nn::Optimizer opt2(nn::Rule::adam, lr, rb1, rb2, eps);
    rig2.step(opt2, g1, -1);
    REQUIRE(rig2.w() == Catch::Approx(rw1).margin(1e-12));
}

TEST_CASE("adagrad steps match hand-derived updates and reset clears state") {
    double eps = 1e-8, lr = 0.1;
    double g1 = 0.5, g2 = -0.2;
    double G1 = g1 * g1;
    double w1 = 0.3 - lr * g1 / (std::sqrt(G1) + eps);
    double G2 = G1 + g2 * g2;
    double w2 = w1 - lr * g2 / (std::sqrt(G2) + eps);

    ScalarRig rig(0.3);
    nn::Optimizer opt(nn::Rule::adagrad, lr);
    rig.step(opt, g1, -1);
    REQUIRE(rig.w() == Catch::Approx(w1).margin(1e-12));
    rig.step(opt, g2, -1);
    REQUIRE(rig.w() == Catch::Approx(w2).margin(1e-12));

    opt.reset();
    double w3 = w2 - lr * g1 / (std::sqrt(g1 * g1) + eps);  // accumulator starts over
    rig.step(opt, g1, -1);
    REQUIRE(rig.w() == Catch::Approx(w3).margin(1e-12));
}

TEST_CASE("training loop is bit-deterministic given the seed") {
    auto run = [] {
        auto g = rng::make(31, "det");
        auto net = nn::make_mlp({10, 16, 1}, nn::Output::sigmoid, g);
        nn::Optimizer opt(nn::Rule::adam, 0.05);
        Mat X = random_mat(32, 10, g);
        Mat C(32, 1);
        for (auto& x : C.d) x = rng::gaussian(g);
        nn::Grads grads;
        grads.init(net);
        for (int t = 0; t < 40; ++t) {
            nn::Cache cache;
            nn::forward(net, X, cache);
            grads.zero();
            nn::backward(net, cache, C, grads, nn::Seed::post_activation);
            grads.scale(1.0 / 32.0);
            opt.step(net, grads, +1);
        }
        return nn::flatten(net);
    };
    auto a = run();
    auto b = run();
    REQUIRE(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}
