#pragma once

// Treatment-effect estimators fit on the principal's observed data. All of
// them share the S-learner design [phi(x), z*phi(x), z] with
// phi(x) = [one-hot(level), v]; tau_hat(x) = f(x, z=1) - f(x, z=0).
// Data accumulates across epochs and models refit on everything so far.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "spg/mat.hpp"
#include "spg/rng.hpp"

namespace spg::cate {

enum class Backend { oracle, linear, boosted };

struct Obs {
    int level;
    std::vector<double> v;
    int z;
    double y;
};

class CateModel {
public:
    virtual ~CateModel() = default;
    // Append one epoch of observations and refit on the cumulative data.
    virtual void absorb(const std::vector<Obs>& rows, rng::Engine& g) = 0;
    virtual double predict(int level, const double* v) const = 0;
    virtual Backend backend() const = 0;
};

class OracleCate : public CateModel {
public:
    explicit OracleCate(std::function<double(int, const double*)> tau) : tau_(std::move(tau)) {}
    void absorb(const std::vector<Obs>&, rng::Engine&) override {}
    double predict(int level, const double* v) const override { return tau_(level, v); }
    Backend backend() const override { return Backend::oracle; }

private:
    std::function<double(int, const double*)> tau_;
};

namespace detail {

// Design row in place: [one-hot(K), v, z*one-hot(K), z*v, z].
inline void design_row(int level, const double* v, int z, std::size_t K, std::size_t dv,
                       double* x) {
    std::size_t p = 2 * (K + dv) + 1;
    std::fill(x, x + p, 0.0);
    x[level] = 1.0;
    for (std::size_t j = 0; j < dv; ++j) x[K + j] = v[j];
    if (z) {
        x[K + dv + level] = 1.0;
        for (std::size_t j = 0; j < dv; ++j) x[2 * K + dv + j] = v[j];
        x[p - 1] = 1.0;
    }
}

// Solves (A + ridge*I) x = b with A symmetric positive semidefinite.
inline std::vector<double> cholesky_solve(Mat A, std::vector<double> b, double ridge) {
    std::size_t n = A.rows;
    for (std::size_t i = 0; i < n; ++i) A(i, i) += ridge;
    for (std::size_t j = 0; j < n; ++j) {
        double d = A(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= A(j, k) * A(j, k);
        if (d <= 0.0) throw std::runtime_error("cate: gram matrix not positive definite");
        d = std::sqrt(d);
        A(j, j) = d;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = A(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= A(i, k) * A(j, k);
            A(i, j) = s / d;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= A(i, k) * b[k];
        b[i] = s / A(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= A(k, i) * b[k];
        b[i] = s / A(i, i);
    }
    return b;
}

}  // namespace detail

// Ridge least squares on the S-learner design. The gram matrix and moment
// vector accumulate, so a cumulative refit costs one solve.
class LinearCate : public CateModel {
public:
    LinearCate(std::size_t n_levels, std::size_t dim_v, double ridge = 1e-6)
        : K_(n_levels), dv_(dim_v), ridge_(ridge), p_(2 * (n_levels + dim_v) + 1) {
        gram_.resize(p_, p_);
        moment_.assign(p_, 0.0);
    }

    void absorb(const std::vector<Obs>& rows, rng::Engine&) override {
        std::vector<double> x(p_);
        for (const auto& r : rows) {
            detail::design_row(r.level, r.v.data(), r.z, K_, dv_, x.data());
            for (std::size_t i = 0; i < p_; ++i) {
                if (x[i] == 0.0) continue;
                double xi = x[i];
                double* grow = gram_.row(i);
                for (std::size_t j = 0; j < p_; ++j) grow[j] += xi * x[j];
                moment_[i] += xi * r.y;
            }
            ++n_;
        }
        if (n_ >= 2) {
            coef_ = detail::cholesky_solve(gram_, moment_, ridge_);
            fitted_ = true;
        }
    }

    // tau_hat = <phi, coef on z*phi> + coef on z
    double predict(int level, const double* v) const override {
        if (!fitted_) return 0.0;
        double s = coef_[K_ + dv_ + level] + coef_[p_ - 1];
        for (std::size_t j = 0; j < dv_; ++j) s += v[j] * coef_[2 * K_ + dv_ + j];
        return s;
    }

    Backend backend() const override { return Backend::linear; }
    std::size_t rows_seen() const { return n_; }

private:
    std::size_t K_, dv_;
    double ridge_;
    std::size_t p_;
    Mat gram_;
    std::vector<double> moment_;
    std::vector<double> coef_;
    std::size_t n_ = 0;
    bool fitted_ = false;
};

namespace detail {

struct TreeNode {
    int feat = -1;  // -1 marks a leaf
    double thr = 0.0;
    int left = -1, right = -1;
    double value = 0.0;
};

struct Tree {
    std::vector<TreeNode> nodes;
    double eval(const double* x) const {
        int i = 0;
        while (nodes[i].feat >= 0) i = x[nodes[i].feat] <= nodes[i].thr ? nodes[i].left : nodes[i].right;
        return nodes[i].value;
    }
};

// Exact greedy regression tree on the given rows of X (feature-major access
// via row pointers), squared error, grown breadth-first to depth_limit.
inline Tree fit_tree(const std::vector<const double*>& X, const std::vector<double>& r,
                     const std::vector<std::size_t>& idx, std::size_t p, int depth_limit) {
    Tree t;
    struct Work {
        std::vector<std::size_t> rows;
        int depth;
        int slot;
    };
    std::vector<Work> stack;
    t.nodes.emplace_back();
    stack.push_back({idx, 0, 0});
    while (!stack.empty()) {
        Work w = std::move(stack.back());
        stack.pop_back();
        double sum = 0.0;
        for (auto i : w.rows) sum += r[i];
        double mean = w.rows.empty() ? 0.0 : sum / double(w.rows.size());
        TreeNode& node = t.nodes[w.slot];
        if (w.depth >= depth_limit || w.rows.size() < 8) {
            node.value = mean;
            continue;
        }
        double base = 0.0;
        for (auto i : w.rows) base += (r[i] - mean) * (r[i] - mean);
        int best_feat = -1;
        double best_thr = 0.0, best_gain = 1e-12;
        std::vector<std::size_t> order(w.rows);
        for (std::size_t f = 0; f < p; ++f) {
            std::sort(order.begin(), order.end(),
                      [&](std::size_t a, std::size_t b) { return X[a][f] < X[b][f]; });
            double lsum = 0.0;
            std::size_t n = order.size();
            for (std::size_t k = 0; k + 1 < n; ++k) {
                lsum += r[order[k]];
                if (X[order[k]][f] == X[order[k + 1]][f]) continue;
                double rsum = sum - lsum;
                double nl = double(k + 1), nr = double(n - k - 1);
                double gain = lsum * lsum / nl + rsum * rsum / nr - sum * sum / double(n);
                if (gain > best_gain) {
                    best_gain = gain;
                    best_feat = int(f);
                    best_thr = 0.5 * (X[order[k]][f] + X[order[k + 1]][f]);
                }
            }
        }
        if (best_feat < 0) {
            node.value = mean;
            continue;
        }
        std::vector<std::size_t> lrows, rrows;
        for (auto i : w.rows)
            (X[i][best_feat] <= best_thr ? lrows : rrows).push_back(i);
        if (lrows.empty() || rrows.empty()) {
            node.value = mean;
            continue;
        }
        int left_slot = int(t.nodes.size());
        int right_slot = left_slot + 1;
        t.nodes.emplace_back();
        t.nodes.emplace_back();  // may reallocate: write through the slot index
        t.nodes[w.slot].feat = best_feat;
        t.nodes[w.slot].thr = best_thr;
        t.nodes[w.slot].left = left_slot;
        t.nodes[w.slot].right = right_slot;
        stack.push_back({std::move(lrows), w.depth + 1, left_slot});
        stack.push_back({std::move(rrows), w.depth + 1, right_slot});
    }
    return t;
}

}  // namespace detail

// Stochastic gradient boosting with squared error on the shared design. One
// ensemble grows across the run: each absorb() adds trees_per_refit trees
// fit on residuals over a subsample of the cumulative data, until the cap.
class BoostedCate : public CateModel {
public:
    BoostedCate(std::size_t n_levels, std::size_t dim_v, std::size_t total_trees = 200,
                int depth = 3, double shrinkage = 0.1, std::size_t trees_per_refit = 200,
                std::size_t subsample = 4000)
        : K_(n_levels),
          dv_(dim_v),
          p_(2 * (n_levels + dim_v) + 1),
          total_trees_(total_trees),
          depth_(depth),
          shrink_(shrinkage),
          per_refit_(trees_per_refit),
          subsample_(subsample) {}

    void absorb(const std::vector<Obs>& rows, rng::Engine& g) override {
        rows_seen_ += rows.size();
        if (trees_.size() >= total_trees_) {
            // Tree budget exhausted: the ensemble is frozen, stop buffering.
            if (!store_.empty()) {
                store_.clear();
                store_.shrink_to_fit();
                ys_.clear();
                ys_.shrink_to_fit();
            }
            return;
        }
        for (const auto& r : rows) {
            std::vector<double> x(p_);
            detail::design_row(r.level, r.v.data(), r.z, K_, dv_, x.data());
            store_.push_back(std::move(x));
            ys_.push_back(r.y);
        }
        if (store_.size() < 16) return;
        if (!base_set_) {
            base_ = std::accumulate(ys_.begin(), ys_.end(), 0.0) / double(ys_.size());
            base_set_ = true;
        }
        std::size_t budget = std::min(per_refit_, total_trees_ - trees_.size());
        for (std::size_t t = 0; t < budget; ++t) add_tree(g);
    }

    double predict(int level, const double* v) const override {
        if (!base_set_) return 0.0;
        std::vector<double> x1(p_), x0(p_);
        detail::design_row(level, v, 1, K_, dv_, x1.data());
        detail::design_row(level, v, 0, K_, dv_, x0.data());
        return raw(x1.data()) - raw(x0.data());
    }

    double raw(const double* x) const {
        double s = base_;
        for (const auto& t : trees_) s += shrink_ * t.eval(x);
        return s;
    }

    Backend backend() const override { return Backend::boosted; }
    std::size_t tree_count() const { return trees_.size(); }
    std::size_t rows_seen() const { return rows_seen_; }

private:
    void add_tree(rng::Engine& g) {
        std::size_t n = store_.size();
        std::size_t m = std::min(subsample_, n);
        std::vector<std::size_t> idx(m);
        if (m == n) {
            std::iota(idx.begin(), idx.end(), 0);
        } else {
            std::uniform_int_distribution<std::size_t> pick(0, n - 1);
            for (auto& i : idx) i = pick(g);
        }
        std::vector<const double*> X(n);
        for (std::size_t i = 0; i < n; ++i) X[i] = store_[i].data();
        std::vector<double> resid(n, 0.0);
        for (auto i : idx) resid[i] = ys_[i] - raw(store_[i].data());
        std::vector<std::size_t> local(idx);
        trees_.push_back(detail::fit_tree(X, resid, local, p_, depth_));
    }

    std::size_t K_, dv_, p_;
    std::size_t total_trees_;
    int depth_;
    double shrink_;
    std::size_t per_refit_, subsample_;
    std::vector<std::vector<double>> store_;
    std::vector<double> ys_;
    std::vector<detail::Tree> trees_;
    double base_ = 0.0;
    bool base_set_ = false;
    std::size_t rows_seen_ = 0;
};

inline std::unique_ptr<CateModel> make_model(Backend b, std::size_t n_levels, std::size_t dim_v,
                                             std::function<double(int, const double*)> oracle,
                                             double ridge = 1e-6,
                                             std::size_t trees_per_refit = 200) {
    switch (b) {
        case Backend::oracle: return std::make_unique<OracleCate>(std::move(oracle));
        case Backend::linear: return std::make_unique<LinearCate>(n_levels, dim_v, ridge);
        case Backend::boosted:
            return std::make_unique<BoostedCate>(n_levels, dim_v, 200, 3, 0.1, trees_per_refit);
    }
    throw std::invalid_argument("cate: unknown backend");
}

}  // namespace spg::cate
