#pragma once

// Dense MLP with ReLU hidden layers, batched forward/backward passes, and
// the three first-order update rules used by the training loops. Parameter
// traversal order is fixed (layer 0 weights row-major, layer 0 biases,
// layer 1 ...), which is what makes optimizer state and flat views line up.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "spg/mat.hpp"
#include "spg/rng.hpp"

namespace spg::nn {

enum class Output { identity, sigmoid, softmax };

struct Mlp {
    std::vector<std::size_t> dims;       // layer widths, input first
    Output output = Output::sigmoid;
    std::vector<Mat> w;                  // w[l]: dims[l+1] x dims[l]
    std::vector<std::vector<double>> b;  // b[l]: dims[l+1]

    std::size_t layers() const { return w.size(); }
    std::size_t in_dim() const { return dims.front(); }
    std::size_t out_dim() const { return dims.back(); }
};

inline std::size_t param_count(const std::vector<std::size_t>& dims) {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) n += dims[l] * dims[l + 1] + dims[l + 1];
    return n;
}

inline std::size_t param_count(const Mlp& net) { return param_count(net.dims); }

// Uniform(-r, r) with r = sqrt(6 / (fan_in + fan_out)); biases start at zero.
inline Mlp make_mlp(std::vector<std::size_t> dims, Output out, rng::Engine& g) {
    if (dims.size() < 2) throw std::invalid_argument("mlp needs input and output widths");
    for (auto d : dims)
        if (d == 0) throw std::invalid_argument("mlp widths must be positive");
    Mlp net;
    net.dims = std::move(dims);
    net.output = out;
    for (std::size_t l = 0; l + 1 < net.dims.size(); ++l) {
        std::size_t fin = net.dims[l], fout = net.dims[l + 1];
        double r = std::sqrt(6.0 / double(fin + fout));
        std::uniform_real_distribution<double> u(-r, r);
        Mat w(fout, fin);
        for (auto& x : w.d) x = u(g);
        net.w.push_back(std::move(w));
        net.b.emplace_back(fout, 0.0);
    }
    return net;
}

// Clamped so downstream ratios never see an exact 0 or 1.
inline double sigmoid(double x) {
    double s;
    if (x >= 0.0) {
        s = 1.0 / (1.0 + std::exp(-x));
    } else {
        double e = std::exp(x);
        s = e / (1.0 + e);
    }
    if (s < 1e-12) s = 1e-12;
    if (s > 1.0 - 1e-12) s = 1.0 - 1e-12;
    return s;
}

// In place, max-subtracted.
inline void softmax_row(double* z, std::size_t n) {
    double mx = z[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, z[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        z[i] = std::exp(z[i] - mx);
        sum += z[i];
    }
    for (std::size_t i = 0; i < n; ++i) z[i] /= sum;
}

struct Cache {
    Mat input;
    std::vector<Mat> act;  // act[l]: batch x dims[l+1], post-activation
};

// Returns the output activations (batch x out_dim), also stored in c.act.back().
inline const Mat& forward(const Mlp& net, const Mat& X, Cache& c) {
    if (X.cols != net.in_dim()) throw std::invalid_argument("forward: input width mismatch");
    c.input = X;
    c.act.resize(net.layers());
    const Mat* cur = &c.input;
    for (std::size_t l = 0; l < net.layers(); ++l) {
        Mat& a = c.act[l];
        gemm_nt(*cur, net.w[l], a);
        const auto& bias = net.b[l];
        for (std::size_t i = 0; i < a.rows; ++i) {
            double* row = a.row(i);
            for (std::size_t j = 0; j < a.cols; ++j) row[j] += bias[j];
        }
        if (l + 1 < net.layers()) {
            for (auto& x : a.d) x = x > 0.0 ? x : 0.0;
        } else {
            switch (net.output) {
                case Output::identity: break;
                case Output::sigmoid:
                    for (auto& x : a.d) x = sigmoid(x);
                    break;
                case Output::softmax:
                    for (std::size_t i = 0; i < a.rows; ++i) softmax_row(a.row(i), a.cols);
                    break;
            }
        }
        cur = &a;
    }
    return c.act.back();
}

inline std::vector<double> forward_one(const Mlp& net, const std::vector<double>& x) {
    Mat X(1, x.size());
    std::copy(x.begin(), x.end(), X.d.begin());
    Cache c;
    const Mat& out = forward(net, X, c);
    return std::vector<double>(out.d.begin(), out.d.end());
}

struct Grads {
    std::vector<Mat> w;
    std::vector<std::vector<double>> b;
    Mat input;  // d(loss)/d(input), filled only when asked for

    void init(const Mlp& net) {
        w.resize(net.layers());
        b.resize(net.layers());
        for (std::size_t l = 0; l < net.layers(); ++l) {
            w[l].resize(net.w[l].rows, net.w[l].cols);
            b[l].assign(net.b[l].size(), 0.0);
        }
    }
    void zero() {
        for (auto& m : w) m.zero();
        for (auto& v : b) std::fill(v.begin(), v.end(), 0.0);
        input.zero();
    }
    void scale(double s) {
        for (auto& m : w)
            for (auto& x : m.d) x *= s;
        for (auto& v : b)
            for (auto& x : v) x *= s;
    }
};

enum class Seed { post_activation, logits };

// Accumulates parameter gradients (summed over batch rows) into g. dOut is
// d(loss)/d(output activations) for Seed::post_activation, or directly
// d(loss)/d(output pre-activations) for Seed::logits. Set want_input_grad to
// also get d(loss)/d(input rows) in g.input (overwritten, not accumulated).
inline void backward(const Mlp& net, const Cache& c, const Mat& dOut, Grads& g, Seed seed,
                     bool want_input_grad = false) {
    std::size_t L = net.layers();
    const Mat& out = c.act[L - 1];
    Mat dz(dOut.rows, dOut.cols);
    if (seed == Seed::logits) {
        dz = dOut;
    } else {
        switch (net.output) {
            case Output::identity: dz = dOut; break;
            case Output::sigmoid:
                for (std::size_t i = 0; i < dz.d.size(); ++i) {
                    double s = out.d[i];
                    dz.d[i] = dOut.d[i] * s * (1.0 - s);
                }
                break;
            case Output::softmax:
                for (std::size_t i = 0; i < dz.rows; ++i) {
                    const double* s = out.row(i);
                    const double* go = dOut.row(i);
                    double dot = 0.0;
                    for (std::size_t j = 0; j < dz.cols; ++j) dot += s[j] * go[j];
                    double* r = dz.row(i);
                    for (std::size_t j = 0; j < dz.cols; ++j) r[j] = s[j] * (go[j] - dot);
                }
                break;
        }
    }
    Mat da;
    for (std::size_t li = L; li-- > 0;) {
        const Mat& below = (li == 0) ? c.input : c.act[li - 1];
        gemm_tn_acc(dz, below, g.w[li]);
        for (std::size_t i = 0; i < dz.rows; ++i) {
            const double* r = dz.row(i);
            for (std::size_t j = 0; j < dz.cols; ++j) g.b[li][j] += r[j];
        }
        if (li == 0) {
            if (want_input_grad) gemm_nn(dz, net.w[0], g.input);
            break;
        }
        gemm_nn(dz, net.w[li], da);
        // ReLU mask from the post-activation of the layer below
        dz.resize(da.rows, da.cols);
        const Mat& act_below = c.act[li - 1];
        for (std::size_t i = 0; i < da.d.size(); ++i)
            dz.d[i] = act_below.d[i] > 0.0 ? da.d[i] : 0.0;
    }
}

template <typename F>
inline void for_each_param(Mlp& net, F&& f) {
    for (std::size_t l = 0; l < net.layers(); ++l) {
        for (auto& x : net.w[l].d) f(x);
        for (auto& x : net.b[l]) f(x);
    }
}

template <typename F>
inline void for_each_param(Mlp& net, const Grads& g, F&& f) {
    for (std::size_t l = 0; l < net.layers(); ++l) {
        for (std::size_t i = 0; i < net.w[l].d.size(); ++i) f(net.w[l].d[i], g.w[l].d[i]);
        for (std::size_t i = 0; i < net.b[l].size(); ++i) f(net.b[l][i], g.b[l][i]);
    }
}

inline std::vector<double> flatten(const Mlp& net) {
    std::vector<double> v;
    v.reserve(param_count(net));
    for_each_param(const_cast<Mlp&>(net), [&](double& x) { v.push_back(x); });
    return v;
}

inline void unflatten(Mlp& net, const std::vector<double>& v) {
    if (v.size() != param_count(net)) throw std::invalid_argument("unflatten: size mismatch");
    std::size_t k = 0;
    for_each_param(net, [&](double& x) { x = v[k++]; });
}

enum class Rule { sgd, adam, adagrad };

// dir = +1 ascends the objective, -1 descends. Moments are over raw
// gradients, so the direction only flips the applied update.
class Optimizer {
public:
    Optimizer(Rule rule, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : rule_(rule), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    void reset() {
        m_.clear();
        v_.clear();
        t_ = 0;
    }

    void step(Mlp& net, const Grads& g, int dir) {
        std::size_t n = param_count(net);
        if (m_.size() != n) {
            m_.assign(n, 0.0);
            if (rule_ == Rule::adam) v_.assign(n, 0.0);
            t_ = 0;
        }
        ++t_;
        double sgn = dir >= 0 ? 1.0 : -1.0;
        std::size_t k = 0;
        switch (rule_) {
            case Rule::sgd:
                for_each_param(net, g, [&](double& p, double gk) {
                    p += sgn * lr_ * gk;
                    ++k;
                });
                break;
            case Rule::adam: {
                double c1 = 1.0 - std::pow(b1_, double(t_));
                double c2 = 1.0 - std::pow(b2_, double(t_));
                for_each_param(net, g, [&](double& p, double gk) {
                    m_[k] = b1_ * m_[k] + (1.0 - b1_) * gk;
                    v_[k] = b2_ * v_[k] + (1.0 - b2_) * gk * gk;
                    double mh = m_[k] / c1;
                    double vh = v_[k] / c2;
                    p += sgn * lr_ * mh / (std::sqrt(vh) + eps_);
                    ++k;
                });
                break;
            }
            case Rule::adagrad:
                for_each_param(net, g, [&](double& p, double gk) {
                    m_[k] += gk * gk;
                    p += sgn * lr_ * gk / (std::sqrt(m_[k]) + eps_);
                    ++k;
                });
                break;
        }
    }

    Rule rule() const { return rule_; }
    double lr() const { return lr_; }

private:
    Rule rule_;
    double lr_, b1_, b2_, eps_;
    std::vector<double> m_, v_;  // adam: first/second moments; adagrad: m_ holds the sum of squares
    long t_ = 0;
};

}  // namespace spg::nn
