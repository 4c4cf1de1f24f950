#pragma once

// Loan environment: rows are applications with a credit amount, a strong
// (hidden-to-agents) score, an ordinary score that sets the starting level,
// and 55 fixed features. Revenue of an approved loan is
// (g - loss_mult * (1 - g)) * amt with g blending the strong score and the
// level actually reached; declined applications yield zero. Rows arrive in
// fixed sequential batches. Data comes from a CSV or from the surrogate
// generator, which produces the same distribution shape as the real file.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "spg/agents.hpp"
#include "spg/mat.hpp"
#include "spg/mechanism.hpp"
#include "spg/rng.hpp"

namespace spg::loan {

struct LoanSchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LoanConfig {
    std::size_t n_levels = 10;
    std::size_t dim_v = 55;
    double lambda = 0.4;     // weight of the strong score inside g
    double loss_mult = 4.0;  // cost multiplier on the lost fraction
    double cost_c = 0.1;
    Mechanism mechanism = Mechanism::best_response;
    std::size_t batches = 300;
    std::size_t rows_per_batch = 1000;
    std::size_t eval_size = 3000;
    std::uint64_t data_seed = 99;  // surrogate generation and eval subsample
    std::string csv_path;          // when set, rows are ingested instead of generated

    void validate() const {
        if (n_levels < 2 || dim_v == 0) throw std::invalid_argument("loan: bad dimensions");
        if (lambda < 0.0 || lambda > 1.0) throw std::invalid_argument("loan: lambda outside [0,1]");
        if (loss_mult <= 0.0 || cost_c < 0.0) throw std::invalid_argument("loan: bad economics");
        if (batches == 0 || rows_per_batch == 0) throw std::invalid_argument("loan: empty batches");
    }
};

struct IngestStats {
    std::size_t accepted = 0;
    std::size_t bad_parse = 0;
    std::size_t bad_score = 0;
    std::size_t bad_amt = 0;
    std::size_t rejected() const { return bad_parse + bad_score + bad_amt; }
};

struct LoanDataset {
    Mat v;  // n x dim_v, standardized at load
    std::vector<double> amt;
    std::vector<double> score_strong;
    std::vector<double> score_ordinary;
    IngestStats stats;
    std::size_t size() const { return amt.size(); }
};

inline int discretize(double score, std::size_t n_levels) {
    int lvl = int(std::floor(score * double(n_levels)));
    if (lvl < 0) lvl = 0;
    if (lvl >= int(n_levels)) lvl = int(n_levels) - 1;
    return lvl;
}

// Level midpoints stand in for the continuous ordinary score after a move.
inline double blend_g(const LoanConfig& cfg, double score_strong, int level) {
    double u = (double(level) + 0.5) / double(cfg.n_levels);
    return cfg.lambda * score_strong + (1.0 - cfg.lambda) * u;
}

// Expected revenue of approving at the given level; the treatment effect,
// since a declined application pays exactly zero.
inline double revenue(const LoanConfig& cfg, double score_strong, int level, double amt) {
    double g = blend_g(cfg, score_strong, level);
    return (g - cfg.loss_mult * (1.0 - g)) * amt;
}

inline double break_even_g(const LoanConfig& cfg) { return cfg.loss_mult / (1.0 + cfg.loss_mult); }

namespace detail {

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Builds the raw (unstandardized) surrogate table. Scores are fixed smooth
// monotone functions of two correlated linear indices of v; amt is
// log-normal and recoverable from v[0]. One shared function produces the
// rows for both the in-memory path and the CSV writer, so the two are
// bit-identical by construction.
inline LoanDataset generate_raw(std::size_t n, std::size_t dim_v, std::uint64_t seed) {
    auto gw = rng::make(seed, "surrogate_weights");
    std::vector<double> w0(dim_v), w1(dim_v), w2(dim_v);
    for (auto& x : w0) x = rng::gaussian(gw);
    for (auto& x : w1) x = rng::gaussian(gw);
    for (auto& x : w2) x = rng::gaussian(gw);
    const double alpha = std::sqrt(0.75), resid = std::sqrt(0.25);
    auto gr = rng::make(seed, "surrogate_rows");
    LoanDataset ds;
    ds.v.resize(n, dim_v);
    ds.amt.resize(n);
    ds.score_strong.resize(n);
    ds.score_ordinary.resize(n);
    double root = std::sqrt(double(dim_v));
    for (std::size_t i = 0; i < n; ++i) {
        double* v = ds.v.row(i);
        for (std::size_t j = 0; j < dim_v; ++j) v[j] = rng::gaussian(gr);
        ds.amt[i] = std::exp(std::log(1e5) + 0.5 * v[0]);
        double t0 = 0.0, t1 = 0.0, t2 = 0.0;
        for (std::size_t j = 0; j < dim_v; ++j) {
            t0 += w0[j] * v[j];
            t1 += w1[j] * v[j];
            t2 += w2[j] * v[j];
        }
        t0 /= root;
        t1 /= root;
        t2 /= root;
        ds.score_strong[i] = logistic(1.6 * (alpha * t0 + resid * t1));
        ds.score_ordinary[i] = logistic(1.4 * (alpha * t0 + resid * t2) + 0.2);
    }
    ds.stats.accepted = n;
    return ds;
}

inline void standardize_columns(Mat& v) {
    for (std::size_t j = 0; j < v.cols; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < v.rows; ++i) mean += v(i, j);
        mean /= double(v.rows);
        double var = 0.0;
        for (std::size_t i = 0; i < v.rows; ++i) {
            double t = v(i, j) - mean;
            var += t * t;
        }
        var /= double(v.rows);
        double sd = std::sqrt(var);
        if (sd < 1e-12) {
            for (std::size_t i = 0; i < v.rows; ++i) v(i, j) = 0.0;
        } else {
            for (std::size_t i = 0; i < v.rows; ++i) v(i, j) = (v(i, j) - mean) / sd;
        }
    }
}

}  // namespace detail

inline LoanDataset generate_surrogate(std::size_t n, std::size_t dim_v, std::uint64_t seed) {
    LoanDataset ds = detail::generate_raw(n, dim_v, seed);
    detail::standardize_columns(ds.v);
    return ds;
}

inline void write_surrogate_csv(const std::string& path, std::size_t n, std::size_t dim_v,
                                std::uint64_t seed) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "amt,score_strong,score_ordinary";
    for (std::size_t j = 1; j <= dim_v; ++j) out << ",v_" << j;
    out << "\n";
    char buf[40];
    auto num = [&](double x) {
        std::snprintf(buf, sizeof buf, "%.17g", x);
        return std::string(buf);
    };
    LoanDataset ds = detail::generate_raw(n, dim_v, seed);
    for (std::size_t i = 0; i < n; ++i) {
        out << num(ds.amt[i]) << ',' << num(ds.score_strong[i]) << ','
            << num(ds.score_ordinary[i]);
        const double* v = ds.v.row(i);
        for (std::size_t j = 0; j < dim_v; ++j) out << ',' << num(v[j]);
        out << "\n";
    }
}

// Header must be exactly amt,score_strong,score_ordinary,v_1..v_K. Rows with
// unparsable cells, scores outside [0,1], or non-positive amt are dropped
// and counted; accepted rows keep file order.
inline LoanDataset ingest_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoanSchemaError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw LoanSchemaError("empty file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cols;
    {
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cols.push_back(c);
    }
    if (cols.size() < 4 || cols[0] != "amt" || cols[1] != "score_strong" ||
        cols[2] != "score_ordinary")
        throw LoanSchemaError("bad header: expected amt,score_strong,score_ordinary,v_1,...");
    std::size_t dim_v = cols.size() - 3;
    for (std::size_t j = 0; j < dim_v; ++j)
        if (cols[3 + j] != "v_" + std::to_string(j + 1))
            throw LoanSchemaError("bad header: feature columns must be v_1..v_" +
                                  std::to_string(dim_v));

    LoanDataset ds;
    std::vector<double> vflat;
    std::vector<double> cell(cols.size());
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const char* p = line.c_str();
        bool ok = true;
        for (std::size_t j = 0; j < cols.size(); ++j) {
            char* end = nullptr;
            cell[j] = std::strtod(p, &end);
            if (end == p || !std::isfinite(cell[j])) {
                ok = false;
                break;
            }
            p = end;
            if (j + 1 < cols.size()) {
                while (*p == ' ') ++p;
                if (*p != ',') {
                    ok = false;
                    break;
                }
                ++p;
            }
        }
        if (!ok) {
            ++ds.stats.bad_parse;
            continue;
        }
        if (cell[1] < 0.0 || cell[1] > 1.0 || cell[2] < 0.0 || cell[2] > 1.0) {
            ++ds.stats.bad_score;
            continue;
        }
        if (cell[0] <= 0.0) {
            ++ds.stats.bad_amt;
            continue;
        }
        ds.amt.push_back(cell[0]);
        ds.score_strong.push_back(cell[1]);
        ds.score_ordinary.push_back(cell[2]);
        vflat.insert(vflat.end(), cell.begin() + 3, cell.end());
        ++ds.stats.accepted;
    }
    ds.v.rows = ds.stats.accepted;
    ds.v.cols = dim_v;
    ds.v.d = std::move(vflat);
    detail::standardize_columns(ds.v);
    return ds;
}

// Adapter the policy-learning loop drives. Rows appear in fixed sequential
// batches; the eval population is a seeded subsample fixed for the session.
class Environment {
public:
    Environment(const LoanConfig& cfg, LoanDataset ds) : cfg_(cfg), ds_(std::move(ds)) {
        cfg_.validate();
        if (ds_.size() < cfg_.batches * cfg_.rows_per_batch)
            throw std::invalid_argument("loan: dataset smaller than batches * rows_per_batch");
        if (ds_.v.cols != cfg_.dim_v)
            throw std::invalid_argument("loan: dataset feature width does not match config");
        build_eval();
    }

    static Environment make(const LoanConfig& cfg) {
        if (!cfg.csv_path.empty()) return Environment(cfg, ingest_csv(cfg.csv_path));
        return Environment(cfg,
                           generate_surrogate(cfg.batches * cfg.rows_per_batch, cfg.dim_v,
                                              cfg.data_seed));
    }

    const LoanConfig& config() const { return cfg_; }
    const LoanDataset& dataset() const { return ds_; }
    std::size_t n_levels() const { return cfg_.n_levels; }
    std::size_t dim_v() const { return cfg_.dim_v; }
    std::size_t batch_size() const { return cfg_.rows_per_batch; }

    AgentBatch draw(std::size_t epoch, rng::Engine&) const {
        std::size_t lo = (epoch % cfg_.batches) * cfg_.rows_per_batch;
        return slice(lo, cfg_.rows_per_batch);
    }

    void manipulate(AgentBatch& b, const Mat& zeta, rng::Engine& g) const {
        if (zeta.rows != b.size() || zeta.cols != cfg_.n_levels)
            throw std::invalid_argument("manipulate: zeta shape mismatch");
        b.zeta = zeta;
        for (std::size_t i = 0; i < b.size(); ++i)
            b.u_final[i] = respond(cfg_.mechanism, zeta.row(i), cfg_.n_levels, b.u0[i],
                                   cfg_.cost_c, 1.0, g);
    }

    int observed(int level) const { return level; }

    double oracle_tau(const AgentBatch& b, std::size_t i, int u) const {
        std::size_t r = b.row_ids[i];
        return revenue(cfg_, ds_.score_strong[r], u, ds_.amt[r]);
    }
    double oracle_tau_observed(const AgentBatch& b, std::size_t i, int u) const {
        return oracle_tau(b, i, u);
    }

    void outcomes(AgentBatch& b, rng::Engine&) const {
        b.y.resize(b.size());
        for (std::size_t i = 0; i < b.size(); ++i)
            b.y[i] = b.z[i] ? oracle_tau(b, i, b.u_final[i]) : 0.0;
    }

    const AgentBatch& eval_population() const { return eval_; }
    std::size_t true_levels() const { return cfg_.n_levels; }
    double move_scale() const { return 1.0; }
    std::uint64_t eval_seed() const { return cfg_.data_seed; }

private:
    AgentBatch slice(std::size_t lo, std::size_t n) const {
        AgentBatch b;
        b.v.resize(n, cfg_.dim_v);
        b.u0.resize(n);
        b.row_ids.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t r = lo + i;
            std::copy(ds_.v.row(r), ds_.v.row(r) + cfg_.dim_v, b.v.row(i));
            b.u0[i] = discretize(ds_.score_ordinary[r], cfg_.n_levels);
            b.row_ids[i] = r;
        }
        b.u_final = b.u0;
        return b;
    }

    void build_eval() {
        std::size_t n = ds_.size();
        std::size_t k = std::min(cfg_.eval_size, n);
        auto g = rng::make(cfg_.data_seed, "eval");
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        for (std::size_t i = 0; i < k; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, n - 1);
            std::swap(idx[i], idx[pick(g)]);
        }
        eval_.v.resize(k, cfg_.dim_v);
        eval_.u0.resize(k);
        eval_.row_ids.resize(k);
        for (std::size_t i = 0; i < k; ++i) {
            std::size_t r = idx[i];
            std::copy(ds_.v.row(r), ds_.v.row(r) + cfg_.dim_v, eval_.v.row(i));
            eval_.u0[i] = discretize(ds_.score_ordinary[r], cfg_.n_levels);
            eval_.row_ids[i] = r;
        }
        eval_.u_final = eval_.u0;
    }

    LoanConfig cfg_;
    LoanDataset ds_;
    AgentBatch eval_;
};

}  // namespace spg::loan
