#pragma once

// Report generation from a run directory. Everything here recomputes from
// metrics.csv / u_hist.csv, never from in-memory state, so re-running
// `report` on an existing directory reproduces summary.csv and the plots
// byte for byte.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "spg/csv.hpp"
#include "spg/svg.hpp"

namespace spg::harness::report {

struct MethodSummary {
    std::string method;
    std::size_t seeds = 0;
    double best_mean = 0, best_se = 0;
    double final_mean = 0, final_se = 0;
    double pct_mean = 0;
    double move_mean = 0;
};

namespace detail {

inline std::pair<double, double> mean_se(const std::vector<double>& xs) {
    double m = 0;
    for (double x : xs) m += x;
    m /= double(xs.size());
    if (xs.size() < 2) return {m, 0.0};
    double s2 = 0;
    for (double x : xs) s2 += (x - m) * (x - m);
    s2 /= double(xs.size() - 1);
    return {m, std::sqrt(s2 / double(xs.size()))};
}

inline std::string method_color(const std::string& m) {
    if (m == "cutoff") return "#777777";
    if (m == "vanilla") return "#1f77b4";
    if (m == "end2end") return "#2ca02c";
    if (m == "strategic") return "#d62728";
    return "#9467bd";
}

struct RunCurve {
    std::vector<double> value, pct, move;  // indexed by epoch
};

// metrics.csv -> (method -> seed -> curve), preserving method order.
struct Parsed {
    std::vector<std::string> method_order;
    std::map<std::string, std::map<std::string, RunCurve>> runs;
};

inline Parsed parse_metrics(const csvio::Table& t) {
    Parsed p;
    std::size_t ce = t.col("epoch"), cm = t.col("method"), cs = t.col("seed"),
                cv = t.col("policy_value"), cp = t.col("pct_change"), cmv = t.col("move");
    for (const auto& r : t.rows) {
        const std::string& m = r[cm];
        if (!p.runs.count(m)) p.method_order.push_back(m);
        RunCurve& c = p.runs[m][r[cs]];
        std::size_t epoch = std::size_t(csvio::to_double(r[ce]));
        if (c.value.size() <= epoch) {
            c.value.resize(epoch + 1);
            c.pct.resize(epoch + 1);
            c.move.resize(epoch + 1);
        }
        c.value[epoch] = csvio::to_double(r[cv]);
        c.pct[epoch] = csvio::to_double(r[cp]);
        c.move[epoch] = csvio::to_double(r[cmv]);
    }
    return p;
}

}  // namespace detail

inline std::vector<MethodSummary> summarize(const csvio::Table& metrics) {
    detail::Parsed p = detail::parse_metrics(metrics);
    std::vector<MethodSummary> out;
    for (const auto& m : p.method_order) {
        MethodSummary s;
        s.method = m;
        std::vector<double> bests, finals, pcts, moves;
        for (const auto& [seed, c] : p.runs[m]) {
            double b = c.value.front();
            for (double v : c.value) b = std::max(b, v);
            bests.push_back(b);
            finals.push_back(c.value.back());
            pcts.push_back(c.pct.back());
            moves.push_back(c.move.back());
        }
        s.seeds = bests.size();
        auto [bm, bs] = detail::mean_se(bests);
        auto [fm, fs] = detail::mean_se(finals);
        s.best_mean = bm;
        s.best_se = bs;
        s.final_mean = fm;
        s.final_se = fs;
        s.pct_mean = detail::mean_se(pcts).first;
        s.move_mean = detail::mean_se(moves).first;
        out.push_back(s);
    }
    return out;
}

inline void write_report(const std::string& dir, std::ostream& out) {
    csvio::Table metrics = csvio::read(dir + "/metrics.csv");
    auto sums = summarize(metrics);

    std::vector<std::vector<std::string>> rows;
    for (const auto& s : sums)
        rows.push_back({s.method, std::to_string(s.seeds), csvio::num(s.best_mean),
                        csvio::num(s.best_se), csvio::num(s.final_mean), csvio::num(s.final_se),
                        csvio::num(s.pct_mean), csvio::num(s.move_mean)});
    csvio::write(dir + "/summary.csv",
                 {"method", "seeds", "best_mean", "best_se", "final_mean", "final_se",
                  "pct_change_final", "move_final"},
                 rows);

    // Mean value curve per method with a +-1 SE band across seeds.
    detail::Parsed p = detail::parse_metrics(metrics);
    std::vector<svg::Series> series;
    for (const auto& m : p.method_order) {
        svg::Series sr;
        sr.label = m;
        sr.color = detail::method_color(m);
        std::size_t T = 0;
        for (const auto& [seed, c] : p.runs[m]) T = std::max(T, c.value.size());
        for (std::size_t t = 0; t < T; ++t) {
            std::vector<double> vals;
            for (const auto& [seed, c] : p.runs[m])
                if (t < c.value.size()) vals.push_back(c.value[t]);
            auto [mu, se] = detail::mean_se(vals);
            sr.x.push_back(double(t));
            sr.y.push_back(mu);
            sr.lo.push_back(mu - se);
            sr.hi.push_back(mu + se);
        }
        series.push_back(std::move(sr));
    }
    std::ofstream(dir + "/value_curves.svg")
        << svg::line_chart("Policy value by training epoch", "epoch", "policy value", series);

    // Final level distribution, when the run wrote one.
    std::ifstream probe(dir + "/u_hist.csv");
    if (probe.good()) {
        probe.close();
        csvio::Table h = csvio::read(dir + "/u_hist.csv");
        std::size_t cm = h.col("method"), cl = h.col("level"), c0 = h.col("count_u0"),
                    c1 = h.col("count_final");
        std::size_t L = 0;
        for (const auto& r : h.rows)
            L = std::max(L, std::size_t(csvio::to_double(r[cl])) + 1);
        // counts averaged over seeds, turned into fractions
        std::vector<std::string> order;
        std::map<std::string, std::vector<double>> fin;
        std::map<std::string, double> tot;
        std::vector<double> init(L, 0.0);
        double init_tot = 0.0;
        bool init_done = false;
        for (const auto& r : h.rows) {
            const std::string& m = r[cm];
            if (!fin.count(m)) {
                order.push_back(m);
                fin[m].assign(L, 0.0);
            }
            std::size_t lvl = std::size_t(csvio::to_double(r[cl]));
            fin[m][lvl] += csvio::to_double(r[c1]);
            tot[m] += csvio::to_double(r[c1]);
        }
        // u0 profile is shared; take it from the first method's rows
        for (const auto& r : h.rows) {
            if (r[cm] != order.front()) continue;
            std::size_t lvl = std::size_t(csvio::to_double(r[cl]));
            init[lvl] += csvio::to_double(r[c0]);
            init_tot += csvio::to_double(r[c0]);
            init_done = true;
        }
        std::vector<svg::BarGroup> groups;
        if (init_done) {
            svg::BarGroup g{"initial", "#bbbbbb", init};
            for (auto& v : g.heights) v /= init_tot;
            groups.push_back(std::move(g));
        }
        for (const auto& m : order) {
            svg::BarGroup g{m, detail::method_color(m), fin[m]};
            for (auto& v : g.heights) v /= tot[m];
            groups.push_back(std::move(g));
        }
        std::vector<std::string> cats;
        for (std::size_t l = 0; l < L; ++l) cats.push_back(std::to_string(l));
        std::ofstream(dir + "/u_histogram.svg") << svg::bar_chart(
            "Level distribution after the final epoch", "level", "fraction", cats, groups);
    }

    char buf[160];
    out << "run: " << dir << "\n";
    std::snprintf(buf, sizeof buf, "%-10s %6s  %-16s %-16s %9s %8s", "method", "seeds", "best",
                  "final", "%change", "move");
    out << buf << "\n";
    for (const auto& s : sums) {
        char best[32], fin[32];
        std::snprintf(best, sizeof best, "%.2f +- %.2f", s.best_mean, s.best_se);
        std::snprintf(fin, sizeof fin, "%.2f +- %.2f", s.final_mean, s.final_se);
        std::snprintf(buf, sizeof buf, "%-10s %6zu  %-16s %-16s %9.2f %8.2f", s.method.c_str(),
                      s.seeds, best, fin, s.pct_mean, s.move_mean);
        out << buf << "\n";
    }
}

}  // namespace spg::harness::report
