#pragma once

#include <Eigen/Core>

#include <vector>

namespace tlsmon {

// Exact minimum-cost assignment (Hungarian method with potentials,
// O(n^2 m)). Works on rectangular matrices: every row is assigned when
// rows <= cols, every column otherwise. Returns the column for each row, or
// -1 for unassigned rows.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

}  // namespace tlsmon
