#pragma once

// Policy nets score (level, features) pairs: the input is a one-hot level
// prefix followed by the feature vector, the output is an approval
// probability. The evaluation vector of an agent collects the policy's
// probability at every level for that agent's features; it is what agents
// see when they decide where to move.

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <vector>

#include "spg/mat.hpp"
#include "spg/nn.hpp"
#include "spg/rng.hpp"

namespace spg::policy {

inline nn::Mlp make(std::size_t n_levels, std::size_t dim_v,
                    const std::vector<std::size_t>& hidden, rng::Engine& g) {
    std::vector<std::size_t> dims;
    dims.push_back(n_levels + dim_v);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(1);
    return nn::make_mlp(std::move(dims), nn::Output::sigmoid, g);
}

namespace detail {
inline void fill_level_inputs(Mat& X, const Mat& v, std::size_t K) {
    X.resize(v.rows, K + v.cols);
    X.zero();
    for (std::size_t i = 0; i < v.rows; ++i)
        std::copy(v.row(i), v.row(i) + v.cols, X.row(i) + K);
}
}  // namespace detail

// out(i, w) = net probability for agent i at level w. Invariant: column w
// equals forward_one on ([onehot(w), v_i]) exactly.
inline void zeta(const nn::Mlp& net, const Mat& v, std::size_t K, Mat& out) {
    Mat X;
    detail::fill_level_inputs(X, v, K);
    out.resize(v.rows, K);
    nn::Cache c;
    for (std::size_t w = 0; w < K; ++w) {
        for (std::size_t i = 0; i < v.rows; ++i) X(i, w) = 1.0;
        const Mat& a = nn::forward(net, X, c);
        for (std::size_t i = 0; i < v.rows; ++i) out(i, w) = a(i, 0);
        for (std::size_t i = 0; i < v.rows; ++i) X(i, w) = 0.0;
    }
}

inline Mat zeta(const nn::Mlp& net, const Mat& v, std::size_t K) {
    Mat out;
    zeta(net, v, K, out);
    return out;
}

// Accumulates sum_i sum_w coef(i, w) * d pi([onehot(w), v_i]) / d params
// into g. Columns that are entirely zero are skipped.
inline void zeta_backward_weighted(const nn::Mlp& net, const Mat& v, std::size_t K,
                                   const Mat& coef, nn::Grads& g) {
    if (coef.rows != v.rows || coef.cols != K)
        throw std::invalid_argument("zeta_backward_weighted: coef shape mismatch");
    Mat X;
    detail::fill_level_inputs(X, v, K);
    nn::Cache c;
    Mat dOut(v.rows, 1);
    for (std::size_t w = 0; w < K; ++w) {
        bool any = false;
        for (std::size_t i = 0; i < v.rows; ++i)
            if (coef(i, w) != 0.0) {
                any = true;
                break;
            }
        if (!any) continue;
        for (std::size_t i = 0; i < v.rows; ++i) X(i, w) = 1.0;
        nn::forward(net, X, c);
        for (std::size_t i = 0; i < v.rows; ++i) dOut(i, 0) = coef(i, w);
        nn::backward(net, c, dOut, g, nn::Seed::post_activation);
        for (std::size_t i = 0; i < v.rows; ++i) X(i, w) = 0.0;
    }
}

inline std::uint64_t checksum(const nn::Mlp& net) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&](double x) {
        std::uint64_t bits;
        std::memcpy(&bits, &x, sizeof bits);
        for (int k = 0; k < 8; ++k) {
            h ^= (bits >> (8 * k)) & 0xffu;
            h *= 1099511628211ull;
        }
    };
    nn::for_each_param(const_cast<nn::Mlp&>(net), [&](double& x) { mix(x); });
    return h;
}

}  // namespace spg::policy
