#pragma once

#include <vector>

#include <Eigen/Core>

namespace rigkit {

// Minimum-cost assignment on a rectangular cost matrix. Returns, for every
// row, the assigned column or -1 when rows outnumber columns. Among equal-cost
// optima the scan order favors lower indices, so results are deterministic.
std::vector<int> SolveAssignment(const Eigen::MatrixXd& cost);

}  // namespace rigkit
