#pragma once

// Experiment configuration: a JSON file selects a scenario, which fixes the
// defaults; any key present overrides its default. Unknown keys anywhere
// are errors, so typos fail loudly instead of silently running defaults.
// The effective config serializes with sorted keys and fixed indentation,
// making the stored snapshot canonical for a given run.

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "spg/learner.hpp"
#include "spg/loan_env.hpp"
#include "spg/mechanism.hpp"
#include "spg/synth_env.hpp"

namespace spg::harness {

using nlohmann::json;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    std::string scenario = "synthetic";
    std::string out_dir = "runs/synthetic";
    std::vector<learner::Method> methods{learner::Method::cutoff, learner::Method::vanilla,
                                         learner::Method::end2end, learner::Method::strategic};
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::size_t workers = 0;  // 0: SPG_WORKERS or hardware
    synth::SynthConfig synth;
    loan::LoanConfig loan;
    learner::LearnerConfig learner;

    bool is_loan() const { return scenario == "loan"; }
};

inline const char* mechanism_name(Mechanism m) {
    switch (m) {
        case Mechanism::best_response: return "best_response";
        case Mechanism::noisy: return "noisy";
        case Mechanism::softmax: return "softmax";
    }
    return "?";
}

inline Mechanism mechanism_from_name(const std::string& s) {
    if (s == "best_response") return Mechanism::best_response;
    if (s == "noisy") return Mechanism::noisy;
    if (s == "softmax") return Mechanism::softmax;
    throw ConfigError("unknown mechanism: " + s);
}

inline const char* backend_name(cate::Backend b) {
    switch (b) {
        case cate::Backend::oracle: return "oracle";
        case cate::Backend::linear: return "linear";
        case cate::Backend::boosted: return "boosted";
    }
    return "?";
}

inline cate::Backend backend_from_name(const std::string& s) {
    if (s == "oracle") return cate::Backend::oracle;
    if (s == "linear") return cate::Backend::linear;
    if (s == "boosted") return cate::Backend::boosted;
    throw ConfigError("unknown cate backend: " + s);
}

namespace detail {

inline void expect_keys(const json& j, const char* where,
                        std::initializer_list<const char*> keys) {
    if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : keys)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok)
            throw ConfigError("unknown key \"" + it.key() + "\" in " + where);
    }
}

template <typename T>
void take(const json& j, const char* where, const char* key, T& dst) {
    if (!j.contains(key)) return;
    try {
        dst = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string(where) + "." + key + ": " + e.what());
    }
}

}  // namespace detail

inline ExperimentConfig defaults_for(const std::string& scenario) {
    ExperimentConfig c;
    c.scenario = scenario;
    c.out_dir = "runs/" + scenario;
    if (scenario == "synthetic" || scenario == "synthetic_noisy" ||
        scenario == "synthetic_softmax") {
        c.synth.mechanism = scenario == "synthetic_noisy"
                                ? Mechanism::noisy
                                : (scenario == "synthetic_softmax" ? Mechanism::softmax
                                                                   : Mechanism::best_response);
        c.learner.epochs = 100;
        c.learner.warmup = 30;
        c.learner.policy_hidden = {50};
        c.learner.lr_warm = 0.05;
        c.learner.lr_main = 0.05;
        c.learner.adam_beta1 = 0.9;
        c.learner.adam_beta2 = 0.999;
        c.learner.cate_backend = cate::Backend::linear;
        c.learner.behavior.hidden = {50, 50};
        c.learner.behavior.lr = 0.1;
    } else if (scenario == "synthetic_coarse") {
        c.synth.n_levels = 10;
        c.synth.true_levels = 15;
        c.learner.epochs = 180;
        c.learner.warmup = 90;
        c.learner.policy_hidden = {60};
        c.learner.lr_warm = 0.05;
        c.learner.lr_main = 0.05;
        c.learner.cate_backend = cate::Backend::linear;
        c.learner.behavior.hidden = {60, 60};
        c.learner.behavior.lr = 0.1;
    } else if (scenario == "loan") {
        c.seeds = {1, 2, 3};
        c.learner.epochs = 300;
        c.learner.warmup = 100;
        c.learner.policy_hidden = {130, 130};
        c.learner.lr_warm = 0.01;
        c.learner.lr_main = 0.01;
        c.learner.adam_beta1 = 0.5;
        c.learner.adam_beta2 = 0.9;
        c.learner.cate_backend = cate::Backend::boosted;
        c.learner.behavior.hidden = {130, 130};
        c.learner.behavior.lr = 0.01;
        c.learner.behavior.finetune_passes = 1;
    } else {
        throw ConfigError("unknown scenario: " + scenario);
    }
    return c;
}

inline json to_json(const ExperimentConfig& c) {
    json j;
    j["scenario"] = c.scenario;
    j["out_dir"] = c.out_dir;
    std::vector<std::string> ms;
    for (auto m : c.methods) ms.emplace_back(learner::to_string(m));
    j["methods"] = ms;
    j["seeds"] = c.seeds;
    j["workers"] = c.workers;
    json env;
    if (c.is_loan()) {
        env["n_levels"] = c.loan.n_levels;
        env["dim_v"] = c.loan.dim_v;
        env["lambda"] = c.loan.lambda;
        env["loss_mult"] = c.loan.loss_mult;
        env["cost_c"] = c.loan.cost_c;
        env["mechanism"] = mechanism_name(c.loan.mechanism);
        env["batches"] = c.loan.batches;
        env["rows_per_batch"] = c.loan.rows_per_batch;
        env["eval_size"] = c.loan.eval_size;
        env["data_seed"] = c.loan.data_seed;
        env["csv_path"] = c.loan.csv_path;
    } else {
        env["dim_v"] = c.synth.dim_v;
        env["n_levels"] = c.synth.n_levels;
        env["true_levels"] = c.synth.true_levels;
        env["batch_size"] = c.synth.batch_size;
        env["eval_size"] = c.synth.eval_size;
        env["cost_c"] = c.synth.cost_c;
        env["mechanism"] = mechanism_name(c.synth.mechanism);
        env["structural_seed"] = c.synth.structural_seed;
        env["noise_on"] = c.synth.noise_on;
    }
    j["env"] = env;
    json L;
    L["epochs"] = c.learner.epochs;
    L["warmup"] = c.learner.warmup;
    L["policy_hidden"] = c.learner.policy_hidden;
    L["lr_warm"] = c.learner.lr_warm;
    L["lr_main"] = c.learner.lr_main;
    L["adam_beta1"] = c.learner.adam_beta1;
    L["adam_beta2"] = c.learner.adam_beta2;
    L["cate"] = backend_name(c.learner.cate_backend);
    L["behavior_finetune"] = c.learner.behavior_finetune;
    j["learner"] = L;
    const auto& b = c.learner.behavior;
    json B;
    B["hidden"] = b.hidden;
    B["lr"] = b.lr;
    B["minibatch"] = b.minibatch;
    B["patience"] = b.patience;
    B["min_delta"] = b.min_delta;
    B["max_passes"] = b.max_passes;
    B["finetune_passes"] = b.finetune_passes;
    B["finetune_sample_cap"] = b.finetune_sample_cap;
    B["floor"] = b.floor;
    B["val_every_cap"] = b.val_every_cap;
    B["val_subsample"] = b.val_subsample;
    B["use_features"] = b.use_features;
    j["behavior"] = B;
    return j;
}

inline std::string normalized(const ExperimentConfig& c) { return to_json(c).dump(2) + "\n"; }

inline void validate(const ExperimentConfig& c) {
    if (c.methods.empty()) throw ConfigError("methods must be non-empty");
    if (c.seeds.empty()) throw ConfigError("seeds must be non-empty");
    for (std::size_t i = 0; i < c.seeds.size(); ++i)
        for (std::size_t k = i + 1; k < c.seeds.size(); ++k)
            if (c.seeds[i] == c.seeds[k]) throw ConfigError("duplicate seed");
    if (c.out_dir.empty()) throw ConfigError("out_dir must be non-empty");
    try {
        if (c.is_loan())
            c.loan.validate();
        else
            c.synth.validate();
        c.learner.validate();
        c.learner.behavior.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    if (c.is_loan()) {
        if (c.learner.cate_backend == cate::Backend::oracle)
            throw ConfigError("loan scenario has no oracle effect backend");
        if (c.learner.epochs > c.loan.batches)
            throw ConfigError("loan: epochs exceed available batches");
    }
}

inline ExperimentConfig overlay(const json& j) {
    detail::expect_keys(j, "config", {"scenario", "out_dir", "methods", "seeds", "workers",
                                      "env", "learner", "behavior"});
    std::string scenario = "synthetic";
    detail::take(j, "config", "scenario", scenario);
    ExperimentConfig c = defaults_for(scenario);
    detail::take(j, "config", "out_dir", c.out_dir);
    if (j.contains("methods")) {
        std::vector<std::string> ms = j.at("methods").get<std::vector<std::string>>();
        c.methods.clear();
        for (const auto& m : ms) {
            try {
                c.methods.push_back(learner::method_from_string(m));
            } catch (const std::exception& e) {
                throw ConfigError(e.what());
            }
        }
    }
    detail::take(j, "config", "seeds", c.seeds);
    detail::take(j, "config", "workers", c.workers);
    if (j.contains("env")) {
        const json& env = j.at("env");
        if (c.is_loan()) {
            detail::expect_keys(env, "env",
                                {"n_levels", "dim_v", "lambda", "loss_mult", "cost_c",
                                 "mechanism", "batches", "rows_per_batch", "eval_size",
                                 "data_seed", "csv_path"});
            detail::take(env, "env", "n_levels", c.loan.n_levels);
            detail::take(env, "env", "dim_v", c.loan.dim_v);
            detail::take(env, "env", "lambda", c.loan.lambda);
            detail::take(env, "env", "loss_mult", c.loan.loss_mult);
            detail::take(env, "env", "cost_c", c.loan.cost_c);
            if (env.contains("mechanism"))
                c.loan.mechanism = mechanism_from_name(env.at("mechanism").get<std::string>());
            detail::take(env, "env", "batches", c.loan.batches);
            detail::take(env, "env", "rows_per_batch", c.loan.rows_per_batch);
            detail::take(env, "env", "eval_size", c.loan.eval_size);
            detail::take(env, "env", "data_seed", c.loan.data_seed);
            detail::take(env, "env", "csv_path", c.loan.csv_path);
        } else {
            detail::expect_keys(env, "env",
                                {"dim_v", "n_levels", "true_levels", "batch_size", "eval_size",
                                 "cost_c", "mechanism", "structural_seed", "noise_on"});
            detail::take(env, "env", "dim_v", c.synth.dim_v);
            detail::take(env, "env", "n_levels", c.synth.n_levels);
            detail::take(env, "env", "true_levels", c.synth.true_levels);
            detail::take(env, "env", "batch_size", c.synth.batch_size);
            detail::take(env, "env", "eval_size", c.synth.eval_size);
            detail::take(env, "env", "cost_c", c.synth.cost_c);
            if (env.contains("mechanism"))
                c.synth.mechanism = mechanism_from_name(env.at("mechanism").get<std::string>());
            detail::take(env, "env", "structural_seed", c.synth.structural_seed);
            detail::take(env, "env", "noise_on", c.synth.noise_on);
        }
    }
    if (j.contains("learner")) {
        const json& L = j.at("learner");
        detail::expect_keys(L, "learner",
                            {"epochs", "warmup", "policy_hidden", "lr_warm", "lr_main",
                             "adam_beta1", "adam_beta2", "cate", "behavior_finetune"});
        detail::take(L, "learner", "epochs", c.learner.epochs);
        detail::take(L, "learner", "warmup", c.learner.warmup);
        detail::take(L, "learner", "policy_hidden", c.learner.policy_hidden);
        detail::take(L, "learner", "lr_warm", c.learner.lr_warm);
        detail::take(L, "learner", "lr_main", c.learner.lr_main);
        detail::take(L, "learner", "adam_beta1", c.learner.adam_beta1);
        detail::take(L, "learner", "adam_beta2", c.learner.adam_beta2);
        if (L.contains("cate"))
            c.learner.cate_backend = backend_from_name(L.at("cate").get<std::string>());
        detail::take(L, "learner", "behavior_finetune", c.learner.behavior_finetune);
    }
    if (j.contains("behavior")) {
        const json& B = j.at("behavior");
        detail::expect_keys(B, "behavior",
                            {"hidden", "lr", "minibatch", "patience", "min_delta", "max_passes",
                             "finetune_passes", "finetune_sample_cap", "floor", "val_every_cap",
                             "val_subsample", "use_features"});
        auto& b = c.learner.behavior;
        detail::take(B, "behavior", "hidden", b.hidden);
        detail::take(B, "behavior", "lr", b.lr);
        detail::take(B, "behavior", "minibatch", b.minibatch);
        detail::take(B, "behavior", "patience", b.patience);
        detail::take(B, "behavior", "min_delta", b.min_delta);
        detail::take(B, "behavior", "max_passes", b.max_passes);
        detail::take(B, "behavior", "finetune_passes", b.finetune_passes);
        detail::take(B, "behavior", "finetune_sample_cap", b.finetune_sample_cap);
        detail::take(B, "behavior", "floor", b.floor);
        detail::take(B, "behavior", "val_every_cap", b.val_every_cap);
        detail::take(B, "behavior", "val_subsample", b.val_subsample);
        detail::take(B, "behavior", "use_features", b.use_features);
    }
    validate(c);
    return c;
}

// "a.b.c=VALUE": VALUE parses as JSON when it can, else as a raw string.
inline void apply_override(json& j, const std::string& spec) {
    auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("bad override: " + spec);
    std::string path = spec.substr(0, eq), val = spec.substr(eq + 1);
    json parsed;
    try {
        parsed = json::parse(val);
    } catch (const json::exception&) {
        parsed = val;
    }
    json* cur = &j;
    std::size_t pos = 0;
    while (true) {
        auto dot = path.find('.', pos);
        std::string key = path.substr(pos, dot == std::string::npos ? dot : dot - pos);
        if (key.empty()) throw ConfigError("bad override path: " + path);
        if (dot == std::string::npos) {
            (*cur)[key] = parsed;
            return;
        }
        cur = &(*cur)[key];
        pos = dot + 1;
    }
}

inline ExperimentConfig load(const std::string& path, const std::vector<std::string>& overrides) {
    json j;
    if (path.empty()) {
        j = json::object();
    } else {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config: " + path);
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config parse error: ") + e.what());
        }
    }
    for (const auto& o : overrides) apply_override(j, o);
    return overlay(j);
}

}  // namespace spg::harness
