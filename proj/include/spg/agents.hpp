#pragma once

// One deployed batch of agents as both environments see it. u0/u_final live
// on the environment's own action grid; row_ids tie loan agents back to
// their dataset rows (unused by the synthetic environment).

#include <cstddef>
#include <vector>

#include "spg/mat.hpp"

namespace spg {

struct AgentBatch {
    Mat v;                            // n x dim_v
    std::vector<int> u0;              // level before manipulation
    std::vector<int> u_final;         // level after manipulation
    Mat zeta;                         // n x n_levels, propensities published to them
    std::vector<int> z;               // assigned treatment
    std::vector<double> y;            // realized outcome
    std::vector<std::size_t> row_ids; // source rows, when drawn from a dataset

    std::size_t size() const { return u0.size(); }
};

}  // namespace spg
