#pragma once

#include <Eigen/Core>

#include <vector>

namespace dml {

// Row-major so that each row is one sample and can be handed out as a
// contiguous span.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Labels = std::vector<int>;

}  // namespace dml
