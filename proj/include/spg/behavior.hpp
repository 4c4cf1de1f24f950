#pragma once

// Behavior models: softmax nets predicting the level an agent lands on.
// Two input conventions. ZetaModel reads the published evaluation vector
// (optionally with the agent's features): the policy enters only through
// what agents can see, so its gradient with respect to the published scores
// is the handle the learner differentiates through. ThetaModel reads the
// raw policy parameters next to the features; the parameter block of its
// first layer is handled as a unit because every row of a batch shares the
// same parameter vector.
//
// Predicted distributions are floored: q~ = (q + floor) / (1 + K * floor),
// so log-gradients stay bounded when the net saturates. The chain rule
// through the floor is kept exact: d log q~_u / d logit_j =
// (q_u / (q_u + floor)) * (1{u=j} - q_j).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "spg/mat.hpp"
#include "spg/nn.hpp"
#include "spg/rng.hpp"

namespace spg::behavior {

struct Config {
    std::vector<std::size_t> hidden{50, 50};
    double lr = 0.1;
    std::size_t minibatch = 128;
    std::size_t patience = 10;  // validation checks without improvement
    double min_delta = 1e-4;
    std::size_t max_passes = 80;          // initial fit
    std::size_t finetune_passes = 2;      // per-epoch refresh
    std::size_t finetune_sample_cap = 20000;
    double floor = 1e-4;
    std::size_t val_every_cap = 200;  // validate every min(batches, cap) steps
    std::size_t val_subsample = 4096;
    bool use_features = true;  // feed v alongside the published scores

    void validate() const {
        if (hidden.empty()) throw std::invalid_argument("behavior: no hidden layers");
        if (lr <= 0.0 || minibatch == 0) throw std::invalid_argument("behavior: bad sgd settings");
        if (floor <= 0.0) throw std::invalid_argument("behavior: floor must be positive");
    }
};

namespace detail {

// Training proceeds anyway: cross-entropy then drives the net toward that
// class's indicator, which the floor keeps off the simplex boundary.
inline void warn_if_single_class(const std::vector<int>& u, const std::vector<std::uint32_t>& idx,
                                 std::size_t m) {
    for (std::size_t i = 1; i < m; ++i)
        if (u[idx[i]] != u[idx[0]]) return;
    if (m > 0)
        std::fprintf(stderr, "warning: behavior fit saw a single observed level (%d)\n",
                     u[idx[0]]);
}

struct EarlyStop {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bad = 0;
    std::vector<double> best_params;

    // Returns true when patience is exhausted.
    bool observe(double val, const nn::Mlp& net, double min_delta, std::size_t patience) {
        if (val < best - min_delta) {
            best = val;
            bad = 0;
            best_params = nn::flatten(net);
            return false;
        }
        ++bad;
        return bad >= patience;
    }
    void restore(nn::Mlp& net) const {
        if (!best_params.empty()) nn::unflatten(net, best_params);
    }
};

inline double cross_entropy(const Mat& q, const int* labels) {
    double s = 0.0;
    for (std::size_t i = 0; i < q.rows; ++i)
        s -= std::log(std::max(q(i, std::size_t(labels[i])), 1e-300));
    return s / double(q.rows);
}

// Picks k distinct values from idx by partial shuffle; the chosen block is
// idx[0..k).
inline void partial_sample(std::vector<std::uint32_t>& idx, std::size_t k, rng::Engine& g) {
    std::size_t n = idx.size();
    for (std::size_t i = 0; i < k && i + 1 < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(idx[i], idx[pick(g)]);
    }
}

}  // namespace detail

inline void apply_floor(Mat& q, double floor) {
    double denom = 1.0 + double(q.cols) * floor;
    for (auto& x : q.d) x = (x + floor) / denom;
}

// Softmax net over [zeta, v] rows. Warm-up observations are pooled with the
// evaluation vector frozen at collection time; the per-epoch refresh trains
// on the fresh batch alone and leaves the pool untouched.
class ZetaModel {
public:
    ZetaModel(std::size_t n_levels, std::size_t dim_v, Config cfg, rng::Engine& g)
        : K_(n_levels), dv_(cfg.use_features ? dim_v : 0), cfg_(cfg) {
        cfg_.validate();
        std::vector<std::size_t> dims;
        dims.push_back(K_ + dv_);
        dims.insert(dims.end(), cfg_.hidden.begin(), cfg_.hidden.end());
        dims.push_back(K_);
        net_ = nn::make_mlp(std::move(dims), nn::Output::softmax, g);
    }

    std::size_t n_levels() const { return K_; }
    std::size_t in_dim() const { return K_ + dv_; }
    const nn::Mlp& net() const { return net_; }
    nn::Mlp& net() { return net_; }
    const Config& config() const { return cfg_; }

    void add(const Mat& zeta, const Mat& v, const std::vector<int>& u) {
        pack(zeta, v, u, x_);
        u_.insert(u_.end(), u.begin(), u.end());
    }

    std::size_t rows() const { return u_.size(); }

    double train(rng::Engine& g) { return fit_on(x_, u_, g, cfg_.max_passes, 0); }

    // Refreshes the fit on one epoch's rows only.
    double finetune(const Mat& zeta, const Mat& v, const std::vector<int>& u, rng::Engine& g) {
        std::vector<double> xt;
        pack(zeta, v, u, xt);
        return fit_on(xt, u, g, cfg_.finetune_passes, cfg_.finetune_sample_cap);
    }

    void predict(const Mat& zeta, const Mat& v, Mat& q) const {
        Mat X;
        make_inputs(zeta, v, X);
        nn::Cache c;
        q = nn::forward(net_, X, c);
        apply_floor(q, cfg_.floor);
    }

    // Per-row gradient of log q~(u_i | zeta_i, v_i) with respect to the
    // zeta inputs; optionally also returns the floored distribution.
    void grad_log_zeta(const Mat& zeta, const Mat& v, const std::vector<int>& u, Mat& dz,
                       Mat* q_out = nullptr) const {
        Mat X;
        make_inputs(zeta, v, X);
        nn::Cache c;
        const Mat& q = nn::forward(net_, X, c);
        Mat dLogits(q.rows, q.cols);
        for (std::size_t i = 0; i < q.rows; ++i) {
            double qu = q(i, std::size_t(u[i]));
            double s = qu / (qu + cfg_.floor);
            for (std::size_t j = 0; j < K_; ++j)
                dLogits(i, j) = s * ((std::size_t(u[i]) == j ? 1.0 : 0.0) - q(i, j));
        }
        nn::Grads gr;
        gr.init(net_);
        nn::backward(net_, c, dLogits, gr, nn::Seed::logits, true);
        dz.resize(q.rows, K_);
        for (std::size_t i = 0; i < q.rows; ++i)
            std::copy(gr.input.row(i), gr.input.row(i) + K_, dz.row(i));
        if (q_out) {
            *q_out = q;
            apply_floor(*q_out, cfg_.floor);
        }
    }

    double val_loss() const { return val_loss_; }
    const std::vector<double>& trace() const { return trace_; }

private:
    void make_inputs(const Mat& zeta, const Mat& v, Mat& X) const {
        X.resize(zeta.rows, K_ + dv_);
        for (std::size_t i = 0; i < zeta.rows; ++i) {
            std::copy(zeta.row(i), zeta.row(i) + K_, X.row(i));
            if (dv_) std::copy(v.row(i), v.row(i) + dv_, X.row(i) + K_);
        }
    }

    void pack(const Mat& zeta, const Mat& v, const std::vector<int>& u,
              std::vector<double>& out) const {
        if (zeta.rows != u.size() || zeta.cols != K_)
            throw std::invalid_argument("behavior: zeta shape mismatch");
        if (dv_ && (v.rows != u.size() || v.cols != dv_))
            throw std::invalid_argument("behavior: feature shape mismatch");
        out.reserve(out.size() + u.size() * (K_ + dv_));
        for (std::size_t i = 0; i < u.size(); ++i) {
            out.insert(out.end(), zeta.row(i), zeta.row(i) + K_);
            if (dv_) out.insert(out.end(), v.row(i), v.row(i) + dv_);
        }
    }

    double fit_on(const std::vector<double>& x, const std::vector<int>& u, rng::Engine& g,
                  std::size_t passes, std::size_t cap) {
        std::size_t n = u.size();
        std::size_t in = K_ + dv_;
        if (n < 5) throw std::runtime_error("behavior: too few observations to fit");
        std::vector<std::uint32_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0u);
        std::size_t m = n;
        if (cap && cap < n) {
            detail::partial_sample(idx, cap, g);
            m = cap;
        }
        std::shuffle(idx.begin(), idx.begin() + long(m), g);
        detail::warn_if_single_class(u, idx, m);
        std::size_t n_val = std::max<std::size_t>(1, m / 5);
        std::size_t n_tr = m - n_val;
        std::size_t vs = std::min(n_val, cfg_.val_subsample);

        Mat Xval(vs, in);
        std::vector<int> uval(vs);
        for (std::size_t i = 0; i < vs; ++i) {
            std::copy(&x[std::size_t(idx[i]) * in], &x[std::size_t(idx[i]) * in] + in,
                      Xval.row(i));
            uval[i] = u[idx[i]];
        }

        nn::Optimizer opt(nn::Rule::sgd, cfg_.lr);
        nn::Grads grads;
        grads.init(net_);
        detail::EarlyStop stop;
        trace_.clear();
        nn::Cache vc;
        auto validate = [&]() {
            const Mat& q = nn::forward(net_, Xval, vc);
            double ce = detail::cross_entropy(q, uval.data());
            trace_.push_back(ce);
            return stop.observe(ce, net_, cfg_.min_delta, cfg_.patience);
        };
        validate();  // baseline snapshot before any step

        std::size_t B = cfg_.minibatch;
        std::size_t batches = (n_tr + B - 1) / B;
        std::size_t val_every = std::max<std::size_t>(1, std::min(batches, cfg_.val_every_cap));
        bool stopped = false;
        std::size_t since = 0;
        Mat Xb, dLogits;
        nn::Cache c;
        std::vector<int> ub;
        for (std::size_t pass = 0; pass < passes && !stopped; ++pass) {
            std::shuffle(idx.begin() + long(n_val), idx.begin() + long(m), g);
            for (std::size_t b0 = 0; b0 < n_tr && !stopped; b0 += B) {
                std::size_t bs = std::min(B, n_tr - b0);
                Xb.resize(bs, in);
                ub.resize(bs);
                for (std::size_t i = 0; i < bs; ++i) {
                    std::uint32_t r = idx[n_val + b0 + i];
                    std::copy(&x[std::size_t(r) * in], &x[std::size_t(r) * in] + in, Xb.row(i));
                    ub[i] = u[r];
                }
                const Mat& q = nn::forward(net_, Xb, c);
                dLogits.resize(bs, K_);
                for (std::size_t i = 0; i < bs; ++i)
                    for (std::size_t j = 0; j < K_; ++j)
                        dLogits(i, j) =
                            (q(i, j) - (std::size_t(ub[i]) == j ? 1.0 : 0.0)) / double(bs);
                grads.zero();
                nn::backward(net_, c, dLogits, grads, nn::Seed::logits);
                opt.step(net_, grads, -1);
                if (++since >= val_every) {
                    since = 0;
                    stopped = validate();
                }
            }
        }
        if (since > 0) validate();
        stop.restore(net_);
        val_loss_ = stop.best;
        return val_loss_;
    }

    std::size_t K_, dv_;
    Config cfg_;
    nn::Mlp net_;
    std::vector<double> x_;
    std::vector<int> u_;
    double val_loss_ = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> trace_;
};

// Softmax net over [policy parameters, v]. Rows are grouped by the
// parameter vector that was live when they were collected; minibatches stay
// inside one group so the parameter block of the first layer is applied and
// differentiated once per step instead of once per row.
class ThetaModel {
public:
    ThetaModel(std::size_t n_levels, std::size_t n_theta, std::size_t dim_v, Config cfg,
               rng::Engine& g)
        : K_(n_levels), P_(n_theta), dv_(dim_v), cfg_(cfg) {
        cfg_.validate();
        std::vector<std::size_t> dims;
        dims.push_back(P_ + dv_);
        dims.insert(dims.end(), cfg_.hidden.begin(), cfg_.hidden.end());
        dims.push_back(K_);
        net_ = nn::make_mlp(std::move(dims), nn::Output::softmax, g);
    }

    std::size_t n_levels() const { return K_; }
    std::size_t n_theta() const { return P_; }
    const nn::Mlp& net() const { return net_; }
    const Config& config() const { return cfg_; }

    int add_group(const std::vector<double>& theta) {
        if (theta.size() != P_) throw std::invalid_argument("behavior group: size mismatch");
        groups_.insert(groups_.end(), theta.begin(), theta.end());
        return int(groups_.size() / P_) - 1;
    }

    void add(int gid, const Mat& v, const std::vector<int>& u) {
        if (gid < 0 || std::size_t(gid) >= groups_.size() / P_)
            throw std::invalid_argument("behavior add: unknown group");
        if (v.rows != u.size() || v.cols != dv_)
            throw std::invalid_argument("behavior add: feature shape mismatch");
        for (std::size_t i = 0; i < u.size(); ++i) {
            xv_.insert(xv_.end(), v.row(i), v.row(i) + dv_);
            gid_.push_back(gid);
            u_.push_back(u[i]);
        }
    }

    std::size_t rows() const { return u_.size(); }

    double train(rng::Engine& g) { return fit_on(groups_, xv_, gid_, u_, g, cfg_.max_passes, 0); }

    // Refreshes on a capped sample of the pool. A single epoch's rows all
    // share one parameter vector and cannot identify the parameter
    // dependence, so unlike the published-score model the refresh must mix
    // groups.
    double finetune(rng::Engine& g) {
        return fit_on(groups_, xv_, gid_, u_, g, cfg_.finetune_passes, cfg_.finetune_sample_cap);
    }

    void predict(const std::vector<double>& theta, const Mat& v, Mat& q) const {
        if (theta.size() != P_) throw std::invalid_argument("predict: theta size mismatch");
        std::vector<Mat> act;
        forward_block(theta.data(), v, act);
        q = act.back();
        apply_floor(q, cfg_.floor);
    }

    // Accumulates sum_i coef[i] * d log q~(u_i | theta, v_i) / d theta into
    // out (resized to P). Only the input gradient is formed; parameter
    // gradients of the net are skipped.
    void grad_log_theta(const std::vector<double>& theta, const Mat& v, const std::vector<int>& u,
                        const std::vector<double>& coef, std::vector<double>& out) const {
        if (theta.size() != P_) throw std::invalid_argument("grad: theta size mismatch");
        std::vector<Mat> act;
        forward_block(theta.data(), v, act);
        const Mat& q = act.back();
        Mat dz(q.rows, K_);
        for (std::size_t i = 0; i < q.rows; ++i) {
            double qu = q(i, std::size_t(u[i]));
            double s = qu / (qu + cfg_.floor);
            for (std::size_t j = 0; j < K_; ++j)
                dz(i, j) = coef[i] * s * ((std::size_t(u[i]) == j ? 1.0 : 0.0) - q(i, j));
        }
        descend_to_first(act, dz);  // dz becomes d loss / d z1
        std::size_t h1 = net_.dims[1];
        std::vector<double> s(h1, 0.0);
        for (std::size_t i = 0; i < dz.rows; ++i) {
            const double* r = dz.row(i);
            for (std::size_t j = 0; j < h1; ++j) s[j] += r[j];
        }
        out.assign(P_, 0.0);
        for (std::size_t r = 0; r < h1; ++r) {
            const double* wrow = net_.w[0].row(r);  // theta block first
            for (std::size_t j = 0; j < P_; ++j) out[j] += s[r] * wrow[j];
        }
    }

    double val_loss() const { return val_loss_; }
    const std::vector<double>& trace() const { return trace_; }

private:
    // Forward with the first layer split into a parameter block (shared by
    // every row) and a feature block. act[l] are post-activations.
    void forward_block(const double* theta, const Mat& V, std::vector<Mat>& act) const {
        std::size_t L = net_.layers();
        std::size_t h1 = net_.dims[1];
        act.resize(L);
        Mat& a0 = act[0];
        a0.resize(V.rows, h1);
        std::vector<double> base(h1);
        for (std::size_t r = 0; r < h1; ++r) {
            const double* wrow = net_.w[0].row(r);
            double s = net_.b[0][r];
            for (std::size_t j = 0; j < P_; ++j) s += wrow[j] * theta[j];
            base[r] = s;
        }
        for (std::size_t i = 0; i < V.rows; ++i) {
            const double* vi = V.row(i);
            double* out = a0.row(i);
            for (std::size_t r = 0; r < h1; ++r) {
                const double* wrow = net_.w[0].row(r) + P_;
                double s = base[r];
                for (std::size_t j = 0; j < dv_; ++j) s += wrow[j] * vi[j];
                out[r] = s;
            }
        }
        if (L == 1) {
            for (std::size_t i = 0; i < a0.rows; ++i) nn::softmax_row(a0.row(i), a0.cols);
            return;
        }
        for (auto& x : a0.d) x = x > 0.0 ? x : 0.0;
        for (std::size_t l = 1; l < L; ++l) {
            Mat& a = act[l];
            gemm_nt(act[l - 1], net_.w[l], a);
            for (std::size_t i = 0; i < a.rows; ++i) {
                double* row = a.row(i);
                for (std::size_t j = 0; j < a.cols; ++j) row[j] += net_.b[l][j];
            }
            if (l + 1 < L) {
                for (auto& x : a.d) x = x > 0.0 ? x : 0.0;
            } else {
                for (std::size_t i = 0; i < a.rows; ++i) nn::softmax_row(a.row(i), a.cols);
            }
        }
    }

    // Walks d loss / d logits down to d loss / d z1 (pre-activation of the
    // first layer), accumulating nothing. dz is modified in place.
    void descend_to_first(const std::vector<Mat>& act, Mat& dz) const {
        std::size_t L = net_.layers();
        Mat da;
        for (std::size_t li = L; li-- > 1;) {
            gemm_nn(dz, net_.w[li], da);
            const Mat& below = act[li - 1];
            dz.resize(da.rows, da.cols);
            for (std::size_t i = 0; i < da.d.size(); ++i)
                dz.d[i] = below.d[i] > 0.0 ? da.d[i] : 0.0;
        }
    }

    // Same walk, but also accumulates parameter gradients for layers >= 1.
    void descend_with_grads(const std::vector<Mat>& act, const Mat& V, Mat& dz,
                            nn::Grads& g) const {
        std::size_t L = net_.layers();
        Mat da;
        for (std::size_t li = L; li-- > 1;) {
            gemm_tn_acc(dz, act[li - 1], g.w[li]);
            for (std::size_t i = 0; i < dz.rows; ++i) {
                const double* r = dz.row(i);
                for (std::size_t j = 0; j < dz.cols; ++j) g.b[li][j] += r[j];
            }
            gemm_nn(dz, net_.w[li], da);
            const Mat& below = act[li - 1];
            dz.resize(da.rows, da.cols);
            for (std::size_t i = 0; i < da.d.size(); ++i)
                dz.d[i] = below.d[i] > 0.0 ? da.d[i] : 0.0;
        }
        // First layer: feature block by the usual outer products, parameter
        // block once via the column sum (all rows share theta).
        std::size_t h1 = net_.dims[1];
        std::vector<double> s(h1, 0.0);
        for (std::size_t i = 0; i < dz.rows; ++i) {
            const double* r = dz.row(i);
            for (std::size_t j = 0; j < h1; ++j) s[j] += r[j];
        }
        for (std::size_t r = 0; r < h1; ++r) g.b[0][r] += s[r];
        const double* theta = cur_theta_;
        for (std::size_t r = 0; r < h1; ++r) {
            double* grow = g.w[0].row(r);
            double sr = s[r];
            if (sr == 0.0) continue;
            for (std::size_t j = 0; j < P_; ++j) grow[j] += sr * theta[j];
        }
        for (std::size_t i = 0; i < dz.rows; ++i) {
            const double* r = dz.row(i);
            const double* vi = V.row(i);
            for (std::size_t h = 0; h < h1; ++h) {
                double c = r[h];
                if (c == 0.0) continue;
                double* grow = g.w[0].row(h) + P_;
                for (std::size_t j = 0; j < dv_; ++j) grow[j] += c * vi[j];
            }
        }
    }

    double fit_on(const std::vector<double>& groups, const std::vector<double>& xv,
                  const std::vector<int>& gid, const std::vector<int>& u, rng::Engine& g,
                  std::size_t passes, std::size_t cap) {
        std::size_t n = u.size();
        if (n < 5) throw std::runtime_error("behavior: too few observations to fit");
        std::size_t G = groups.size() / P_;
        std::vector<std::uint32_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0u);
        std::size_t m = n;
        if (cap && cap < n) {
            detail::partial_sample(idx, cap, g);
            m = cap;
        }
        std::shuffle(idx.begin(), idx.begin() + long(m), g);
        detail::warn_if_single_class(u, idx, m);
        std::size_t n_val = std::max<std::size_t>(1, m / 5);
        std::size_t n_tr = m - n_val;

        // Bucket by group; validation rows are capped globally.
        std::vector<std::vector<std::uint32_t>> val_by_g(G), tr_by_g(G);
        std::size_t vtaken = 0;
        for (std::size_t i = 0; i < n_val && vtaken < cfg_.val_subsample; ++i, ++vtaken)
            val_by_g[std::size_t(gid[idx[i]])].push_back(idx[i]);
        for (std::size_t i = n_val; i < m; ++i)
            tr_by_g[std::size_t(gid[idx[i]])].push_back(idx[i]);

        nn::Optimizer opt(nn::Rule::sgd, cfg_.lr);
        nn::Grads grads;
        grads.init(net_);
        detail::EarlyStop stop;
        trace_.clear();
        Mat Vb, dLogits;
        std::vector<int> ub;
        std::vector<Mat> act;
        auto gather = [&](const std::uint32_t* rows, std::size_t len) {
            Vb.resize(len, dv_);
            ub.resize(len);
            for (std::size_t i = 0; i < len; ++i) {
                std::copy(&xv[std::size_t(rows[i]) * dv_], &xv[std::size_t(rows[i]) * dv_] + dv_,
                          Vb.row(i));
                ub[i] = u[rows[i]];
            }
        };
        auto validate = [&]() {
            double ce = 0.0;
            std::size_t total = 0;
            for (std::size_t gi = 0; gi < G; ++gi) {
                auto& rows = val_by_g[gi];
                if (rows.empty()) continue;
                gather(rows.data(), rows.size());
                forward_block(&groups[gi * P_], Vb, act);
                ce += detail::cross_entropy(act.back(), ub.data()) * double(rows.size());
                total += rows.size();
            }
            ce /= double(total);
            trace_.push_back(ce);
            return stop.observe(ce, net_, cfg_.min_delta, cfg_.patience);
        };
        validate();

        struct Slice {
            std::uint32_t gi, start, len;
        };
        std::vector<Slice> slices;
        std::size_t B = cfg_.minibatch;
        for (std::size_t gi = 0; gi < G; ++gi)
            for (std::size_t s = 0; s < tr_by_g[gi].size(); s += B)
                slices.push_back({std::uint32_t(gi), std::uint32_t(s),
                                  std::uint32_t(std::min(B, tr_by_g[gi].size() - s))});
        std::size_t val_every = std::max<std::size_t>(
            1, std::min(std::max<std::size_t>(1, (n_tr + B - 1) / B), cfg_.val_every_cap));
        bool stopped = false;
        std::size_t since = 0;
        for (std::size_t pass = 0; pass < passes && !stopped; ++pass) {
            for (std::size_t gi = 0; gi < G; ++gi)
                std::shuffle(tr_by_g[gi].begin(), tr_by_g[gi].end(), g);
            std::shuffle(slices.begin(), slices.end(), g);
            for (const Slice& s : slices) {
                gather(tr_by_g[s.gi].data() + s.start, s.len);
                cur_theta_ = &groups[std::size_t(s.gi) * P_];
                forward_block(cur_theta_, Vb, act);
                const Mat& q = act.back();
                dLogits.resize(s.len, K_);
                for (std::size_t i = 0; i < s.len; ++i)
                    for (std::size_t j = 0; j < K_; ++j)
                        dLogits(i, j) =
                            (q(i, j) - (std::size_t(ub[i]) == j ? 1.0 : 0.0)) / double(s.len);
                grads.zero();
                descend_with_grads(act, Vb, dLogits, grads);
                opt.step(net_, grads, -1);
                if (++since >= val_every) {
                    since = 0;
                    if ((stopped = validate())) break;
                }
            }
        }
        if (since > 0) validate();
        stop.restore(net_);
        val_loss_ = stop.best;
        return val_loss_;
    }

    std::size_t K_, P_, dv_;
    Config cfg_;
    nn::Mlp net_;
    std::vector<double> groups_;  // G x P, row-major
    std::vector<double> xv_;      // n x dv
    std::vector<int> gid_;
    std::vector<int> u_;
    const double* cur_theta_ = nullptr;
    double val_loss_ = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> trace_;
};

}  // namespace spg::behavior
