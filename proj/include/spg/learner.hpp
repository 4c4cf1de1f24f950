#pragma once

// Policy training loop. One driver covers the four methods:
//
//   cutoff     fixed rule, approve exactly where the oracle effect on the
//              observed grid is positive; nothing is learned.
//   vanilla    gradient of the sampled value with the population held fixed:
//              only the direct term  (1/n) sum_i grad pi(x_i) tau^(x_i).
//   strategic  adds the response term through a behavior model that reads
//              the published evaluation vector:
//              (1/n) sum_i pi(x_i) tau^(x_i) grad_theta log q~(u_i | zeta_i),
//              where grad_theta log q~ factors through grad_zeta log q~.
//   end2end    same correction, but the behavior model reads the raw policy
//              parameters, so the term is its input gradient on that block.
//
// Every gradient method spends the first `warmup` epochs on the direct term
// with Adam, then the pooled warm-up data trains the behavior model and a
// fresh Adagrad takes over (parameters carry across the switch, optimizer
// state does not). Later epochs refresh the behavior fit unless switched
// off: the published-score model retrains on its own batch, the
// parameter-reading model on a capped sample of the growing pool.
//
// Stream discipline: "env" drives sampling, manipulation, treatment, and
// outcomes; "behavior" drives behavior-model init and fitting; "cate" the
// effect model; "policy_init" the policy net. Evaluation re-manipulates a
// population fixed by the environment seed, so methods and seeds share it.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "spg/agents.hpp"
#include "spg/behavior.hpp"
#include "spg/cate.hpp"
#include "spg/mat.hpp"
#include "spg/nn.hpp"
#include "spg/policy.hpp"
#include "spg/rng.hpp"

namespace spg::learner {

enum class Method { cutoff, vanilla, end2end, strategic };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::cutoff: return "cutoff";
        case Method::vanilla: return "vanilla";
        case Method::end2end: return "end2end";
        case Method::strategic: return "strategic";
    }
    return "?";
}

inline Method method_from_string(const std::string& s) {
    if (s == "cutoff") return Method::cutoff;
    if (s == "vanilla") return Method::vanilla;
    if (s == "end2end") return Method::end2end;
    if (s == "strategic") return Method::strategic;
    throw std::invalid_argument("unknown method: " + s);
}

struct NumericAbort : std::runtime_error {
    std::size_t epoch;
    explicit NumericAbort(std::size_t t, const std::string& what)
        : std::runtime_error("non-finite " + what + " at epoch " + std::to_string(t)), epoch(t) {}
};

struct LearnerConfig {
    Method method = Method::strategic;
    std::size_t epochs = 100;  // gradient steps after the initial evaluation
    std::size_t warmup = 30;   // epochs on the direct term only
    std::vector<std::size_t> policy_hidden{50};
    double lr_warm = 0.05;  // Adam, warm-up phase
    double lr_main = 0.05;  // Adagrad, afterwards
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    behavior::Config behavior;
    cate::Backend cate_backend = cate::Backend::linear;
    bool behavior_finetune = true;          // refresh the fit every epoch
    bool force_zero_behavior_term = false;  // keep the pipeline, drop the term
    std::uint64_t seed = 1;
    std::uint64_t eval_seed = 0;  // 0: take the environment's

    void validate() const {
        if (warmup > epochs) throw std::invalid_argument("learner: warmup > epochs");
        if (policy_hidden.empty()) throw std::invalid_argument("learner: no policy hidden layers");
        if (lr_warm <= 0.0 || lr_main <= 0.0) throw std::invalid_argument("learner: bad lr");
    }
};

struct EpochStats {
    std::size_t epoch = 0;
    double value = 0.0;
    double pct_change = 0.0;  // share of the eval population that moved, in %
    double move = 0.0;        // mean signed move in observed-grid units
    double behavior_loss = std::numeric_limits<double>::quiet_NaN();
};

struct RunResult {
    Method method = Method::cutoff;
    std::uint64_t seed = 0;
    std::vector<EpochStats> epochs;  // epochs.front() is the initial policy
    std::vector<int> final_u0;       // eval population at the last evaluation
    std::vector<int> final_u;
    std::uint64_t theta_checksum = 0;

    double final_value() const { return epochs.back().value; }
    double best_value() const {
        double b = epochs.front().value;
        for (const auto& e : epochs) b = std::max(b, e.value);
        return b;
    }
};

namespace detail {

inline void add_flat(nn::Grads& g, const std::vector<double>& v) {
    std::size_t k = 0;
    for (std::size_t l = 0; l < g.w.size(); ++l) {
        for (auto& x : g.w[l].d) x += v[k++];
        for (auto& x : g.b[l]) x += v[k++];
    }
    if (k != v.size()) throw std::invalid_argument("add_flat: size mismatch");
}

inline bool all_finite(const nn::Grads& g) {
    for (const auto& m : g.w)
        for (double x : m.d)
            if (!std::isfinite(x)) return false;
    for (const auto& v : g.b)
        for (double x : v)
            if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace detail

template <typename Env>
class Driver {
public:
    Driver(const Env& env, LearnerConfig cfg, std::unique_ptr<cate::CateModel> tau)
        : env_(env),
          cfg_(std::move(cfg)),
          tau_(std::move(tau)),
          K_(env.n_levels()),
          dv_(env.dim_v()),
          env_g_(rng::make(cfg_.seed, "env")),
          beh_g_(rng::make(cfg_.seed, "behavior")),
          cate_g_(rng::make(cfg_.seed, "cate")) {
        cfg_.validate();
        if (cfg_.eval_seed == 0) cfg_.eval_seed = env_.eval_seed();
        if (cfg_.method != Method::cutoff) {
            auto pg = rng::make(cfg_.seed, "policy_init");
            policy_ = policy::make(K_, dv_, cfg_.policy_hidden, pg);
            grads_.init(policy_);
            opt_warm_ = std::make_unique<nn::Optimizer>(nn::Rule::adam, cfg_.lr_warm,
                                                        cfg_.adam_beta1, cfg_.adam_beta2);
            opt_main_ = std::make_unique<nn::Optimizer>(nn::Rule::adagrad, cfg_.lr_main);
        }
        if (cfg_.method == Method::strategic)
            zeta_model_ = std::make_unique<behavior::ZetaModel>(K_, dv_, cfg_.behavior, beh_g_);
        if (cfg_.method == Method::end2end)
            theta_model_ = std::make_unique<behavior::ThetaModel>(K_, nn::param_count(policy_),
                                                                  dv_, cfg_.behavior, beh_g_);
    }

    RunResult run() {
        RunResult res;
        res.method = cfg_.method;
        res.seed = cfg_.seed;
        if (cfg_.method == Method::cutoff) {
            for (std::size_t t = 0; t <= cfg_.epochs; ++t)
                res.epochs.push_back(evaluate(t, t == cfg_.epochs ? &res : nullptr));
            return res;
        }
        res.epochs.push_back(evaluate(0, cfg_.epochs == 0 ? &res : nullptr));
        for (std::size_t t = 0; t < cfg_.epochs; ++t) {
            if (t == cfg_.warmup && needs_behavior())
                safe_train([&] { return initial_fit(); });
            train_epoch(t);
            res.epochs.push_back(evaluate(t + 1, t + 1 == cfg_.epochs ? &res : nullptr));
        }
        res.theta_checksum = policy::checksum(policy_);
        return res;
    }

    const nn::Mlp& policy() const { return policy_; }
    nn::Mlp& policy() { return policy_; }  // warm starts
    const behavior::ZetaModel* zeta_model() const { return zeta_model_.get(); }
    bool behavior_ok() const { return behavior_ok_; }

private:
    bool needs_behavior() const {
        return cfg_.method == Method::strategic || cfg_.method == Method::end2end;
    }

    double initial_fit() {
        if (zeta_model_) return zeta_model_->train(beh_g_);
        return theta_model_->train(beh_g_);
    }

    template <typename F>
    void safe_train(F&& f) {
        if (!behavior_ok_) return;
        try {
            double loss = f();
            if (!std::isfinite(loss)) throw std::runtime_error("non-finite validation loss");
            behavior_loss_ = loss;
        } catch (const std::exception& e) {
            behavior_ok_ = false;
            std::fprintf(stderr,
                         "warning: behavior model fit failed (%s); "
                         "continuing on the direct term only\n",
                         e.what());
        }
    }

    void train_epoch(std::size_t t) {
        AgentBatch b = env_.draw(t, env_g_);
        const std::size_t n = b.size();
        Mat zb;
        policy::zeta(policy_, b.v, K_, zb);
        env_.manipulate(b, zb, env_g_);
        std::vector<int> obs(n);
        std::vector<double> pi(n);
        for (std::size_t i = 0; i < n; ++i) {
            obs[i] = env_.observed(b.u_final[i]);
            pi[i] = b.zeta(i, std::size_t(obs[i]));
        }
        b.z.resize(n);
        for (std::size_t i = 0; i < n; ++i) b.z[i] = rng::uniform(env_g_) < pi[i] ? 1 : 0;
        env_.outcomes(b, env_g_);

        if (tau_) {
            std::vector<cate::Obs> rows;
            rows.reserve(n);
            for (std::size_t i = 0; i < n; ++i)
                rows.push_back({obs[i], std::vector<double>(b.v.row(i), b.v.row(i) + dv_),
                                b.z[i], b.y[i]});
            tau_->absorb(rows, cate_g_);
        }
        std::vector<double> tau_hat(n);
        for (std::size_t i = 0; i < n; ++i)
            tau_hat[i] = tau_ ? tau_->predict(obs[i], b.v.row(i))
                              : env_.oracle_tau_observed(b, i, obs[i]);

        const bool main_phase = t >= cfg_.warmup;
        if (zeta_model_) {
            if (!main_phase)
                zeta_model_->add(b.zeta, b.v, obs);
            else if (cfg_.behavior_finetune)
                safe_train([&] { return zeta_model_->finetune(b.zeta, b.v, obs, beh_g_); });
        }
        if (theta_model_) {
            int gid = theta_model_->add_group(nn::flatten(policy_));
            theta_model_->add(gid, b.v, obs);
            if (main_phase && cfg_.behavior_finetune)
                safe_train([&] { return theta_model_->finetune(beh_g_); });
        }

        Mat coef(n, K_);
        coef.zero();
        const double inv_n = 1.0 / double(n);
        for (std::size_t i = 0; i < n; ++i) coef(i, std::size_t(obs[i])) += tau_hat[i] * inv_n;
        const bool with_term = main_phase && behavior_ok_ && !cfg_.force_zero_behavior_term;
        if (with_term && zeta_model_) {
            Mat dlq;
            zeta_model_->grad_log_zeta(b.zeta, b.v, obs, dlq);
            for (std::size_t i = 0; i < n; ++i) {
                double c = pi[i] * tau_hat[i] * inv_n;
                for (std::size_t w = 0; w < K_; ++w) coef(i, w) += c * dlq(i, w);
            }
        }
        grads_.zero();
        policy::zeta_backward_weighted(policy_, b.v, K_, coef, grads_);
        if (with_term && theta_model_) {
            std::vector<double> cvec(n);
            for (std::size_t i = 0; i < n; ++i) cvec[i] = pi[i] * tau_hat[i] * inv_n;
            std::vector<double> gth;
            theta_model_->grad_log_theta(nn::flatten(policy_), b.v, obs, cvec, gth);
            detail::add_flat(grads_, gth);
        }
        if (!detail::all_finite(grads_)) throw NumericAbort(t, "gradient");
        (main_phase ? *opt_main_ : *opt_warm_).step(policy_, grads_, +1);
    }

    EpochStats evaluate(std::size_t epoch, RunResult* capture) {
        AgentBatch e = env_.eval_population();
        Mat ze;
        if (cfg_.method == Method::cutoff) {
            ze.resize(e.size(), K_);
            for (std::size_t i = 0; i < e.size(); ++i)
                for (std::size_t w = 0; w < K_; ++w)
                    ze(i, w) = env_.oracle_tau_observed(e, i, int(w)) > 0.0 ? 1.0 : 0.0;
        } else {
            policy::zeta(policy_, e.v, K_, ze);
        }
        auto g = rng::make(cfg_.eval_seed, "eval_manip", epoch);
        env_.manipulate(e, ze, g);
        double val = 0.0, chg = 0.0, mv = 0.0;
        const std::size_t n = e.size();
        for (std::size_t i = 0; i < n; ++i) {
            int ob = env_.observed(e.u_final[i]);
            val += e.zeta(i, std::size_t(ob)) * env_.oracle_tau(e, i, e.u_final[i]);
            if (e.u_final[i] != e.u0[i]) chg += 1.0;
            mv += double(e.u_final[i] - e.u0[i]);
        }
        EpochStats s;
        s.epoch = epoch;
        s.value = val / double(n);
        s.pct_change = 100.0 * chg / double(n);
        s.move = mv * env_.move_scale() / double(n);
        s.behavior_loss = behavior_loss_;
        if (!std::isfinite(s.value)) throw NumericAbort(epoch, "policy value");
        if (capture) {
            capture->final_u0 = e.u0;
            capture->final_u = e.u_final;
        }
        return s;
    }

    const Env& env_;
    LearnerConfig cfg_;
    std::unique_ptr<cate::CateModel> tau_;
    std::size_t K_, dv_;
    rng::Engine env_g_, beh_g_, cate_g_;
    nn::Mlp policy_;
    nn::Grads grads_;
    std::unique_ptr<nn::Optimizer> opt_warm_, opt_main_;
    std::unique_ptr<behavior::ZetaModel> zeta_model_;
    std::unique_ptr<behavior::ThetaModel> theta_model_;
    bool behavior_ok_ = true;
    double behavior_loss_ = std::numeric_limits<double>::quiet_NaN();
};

template <typename Env>
RunResult run_method(const Env& env, const LearnerConfig& cfg,
                     std::unique_ptr<cate::CateModel> tau) {
    Driver<Env> d(env, cfg, std::move(tau));
    return d.run();
}

}  // namespace spg::learner
