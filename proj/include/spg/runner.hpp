#pragma once

// Experiment execution: one environment instance shared read-only across a
// worker pool keyed by (method, seed). Results land in slots indexed by
// task order, so output files do not depend on scheduling. A run directory
// holds the canonical config snapshot, per-epoch metrics, the final level
// histogram, and the derived report.

#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "spg/config.hpp"
#include "spg/csv.hpp"
#include "spg/learner.hpp"
#include "spg/report.hpp"

namespace spg::harness {

inline std::size_t resolve_workers(std::size_t configured) {
    if (configured) return configured;
    if (const char* e = std::getenv("SPG_WORKERS")) {
        long v = std::strtol(e, nullptr, 10);
        if (v >= 1) return std::size_t(v);
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc ? hc : 1;
}

namespace detail {

template <typename Env>
std::unique_ptr<cate::CateModel> build_tau(const Env& env, const ExperimentConfig& cfg,
                                           learner::Method m) {
    if (m == learner::Method::cutoff) return nullptr;
    std::function<double(int, const double*)> oracle;
    if constexpr (std::is_same_v<Env, synth::Environment>) oracle = env.cate_oracle();
    std::size_t warm = std::max<std::size_t>(1, cfg.learner.warmup);
    std::size_t per_refit = (200 + warm - 1) / warm;
    return cate::make_model(cfg.learner.cate_backend, env.n_levels(), env.dim_v(),
                            std::move(oracle), 1e-6, per_refit);
}

}  // namespace detail

template <typename Env>
std::vector<learner::RunResult> execute_all(const Env& env, const ExperimentConfig& cfg,
                                            std::ostream& log) {
    struct Task {
        learner::Method m;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    for (auto m : cfg.methods)
        for (auto s : cfg.seeds) tasks.push_back({m, s});
    std::vector<learner::RunResult> results(tasks.size());
    std::vector<std::exception_ptr> errors(tasks.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mx;
    auto work = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            auto lc = cfg.learner;
            lc.method = tasks[i].m;
            lc.seed = tasks[i].seed;
            try {
                results[i] =
                    learner::run_method(env, lc, detail::build_tau(env, cfg, tasks[i].m));
                std::lock_guard<std::mutex> lk(log_mx);
                char buf[128];
                std::snprintf(buf, sizeof buf, "  %-10s seed %llu  best %.4g  final %.4g",
                              learner::to_string(tasks[i].m),
                              (unsigned long long)tasks[i].seed, results[i].best_value(),
                              results[i].final_value());
                log << buf << "\n" << std::flush;
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::size_t nw = std::min(resolve_workers(cfg.workers), tasks.size());
    if (nw <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < nw; ++t) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return results;
}

inline void write_outputs(const ExperimentConfig& cfg,
                          const std::vector<learner::RunResult>& results,
                          std::size_t true_levels, std::ostream& log) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    std::ofstream(cfg.out_dir + "/config.json") << normalized(cfg);

    std::vector<std::vector<std::string>> rows;
    for (const auto& r : results)
        for (const auto& e : r.epochs)
            rows.push_back({std::to_string(e.epoch), learner::to_string(r.method),
                            std::to_string(r.seed), csvio::num(e.value),
                            csvio::num(e.pct_change), csvio::num(e.move),
                            csvio::num(e.behavior_loss)});
    csvio::write(cfg.out_dir + "/metrics.csv",
                 {"epoch", "method", "seed", "policy_value", "pct_change", "move",
                  "behavior_loss"},
                 rows);

    rows.clear();
    for (const auto& r : results) {
        std::vector<std::size_t> c0(true_levels, 0), c1(true_levels, 0);
        for (int u : r.final_u0) ++c0[std::size_t(u)];
        for (int u : r.final_u) ++c1[std::size_t(u)];
        for (std::size_t l = 0; l < true_levels; ++l)
            rows.push_back({learner::to_string(r.method), std::to_string(r.seed),
                            std::to_string(l), std::to_string(c0[l]), std::to_string(c1[l])});
    }
    csvio::write(cfg.out_dir + "/u_hist.csv",
                 {"method", "seed", "level", "count_u0", "count_final"}, rows);

    report::write_report(cfg.out_dir, log);
}

inline void run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
    validate(cfg);
    log << "scenario " << cfg.scenario << " -> " << cfg.out_dir << "\n";
    if (cfg.is_loan()) {
        auto env = loan::Environment::make(cfg.loan);
        if (!cfg.loan.csv_path.empty())
            log << "ingested " << env.dataset().size() << " rows ("
                << env.dataset().stats.rejected() << " rejected)\n";
        auto results = execute_all(env, cfg, log);
        write_outputs(cfg, results, env.true_levels(), log);
    } else {
        synth::Environment env(cfg.synth);
        auto results = execute_all(env, cfg, log);
        write_outputs(cfg, results, env.true_levels(), log);
    }
}

}  // namespace spg::harness
