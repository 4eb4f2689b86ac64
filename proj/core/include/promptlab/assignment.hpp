#pragma once

#include "promptlab/linalg.hpp"

#include <vector>

namespace plab {

struct Assignment {
    std::vector<Index> column_of_row; // row i is matched to column column_of_row[i]
    double cost = 0.0;
};

// Minimum-cost perfect matching on a square cost matrix (Hungarian method
// with potentials, O(n^3)).
Assignment solve_assignment(const Matrix& cost);

} // namespace plab
