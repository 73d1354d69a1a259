#pragma once

// Data-parallel inner loops shared by the objective, retrieval and
// diagnostics code. Every kernel has a serial path and an OpenMP path; the
// parallel path splits work by output row only and keeps the per-row
// arithmetic identical, so both paths agree bitwise. Tests rely on that.

#include "dml/types.hpp"

#include <span>
#include <vector>

namespace dml::kernels {

enum class Exec { serial, parallel };

// Process-wide default used by the high-level API.
Exec default_exec();
void set_default_exec(Exec exec);

double dot(const double* a, const double* b, Eigen::Index n);

// out(i, j) = <a_i, b_j>.
void gram(const Matrix& a, const Matrix& b, Matrix& out, Exec exec);

struct ContrastiveRows {
  std::vector<double> positive;  // per-anchor positive sum
  std::vector<double> negative;  // per-anchor hinge sum
  Matrix grad;                   // N x d, already scaled by 1/N
};

// Per-anchor terms of the margin contrastive loss over batch rows paired
// with every other batch row and every memory row. The gradient covers the
// batch rows only and accounts for each batch row appearing both as anchor
// and as partner.
ContrastiveRows contrastive_rows(const Matrix& z, std::span<const int> labels,
                                 const Matrix& memory,
                                 std::span<const int> memory_labels,
                                 double beta, Exec exec);

struct Neighbor {
  Eigen::Index index = -1;
  double distance = 0.0;
};

// Euclidean nearest neighbour of each row among the other rows; ties go to
// the lowest index.
std::vector<Neighbor> nearest_neighbors(const Matrix& z, Exec exec);

struct Ranking {
  std::vector<Eigen::Index> order;
  std::vector<double> scores;
};

// Full descending-similarity ranking of the gallery for each query; ties by
// ascending gallery index. With exclude_self, gallery row q is dropped from
// the ranking of query q.
std::vector<Ranking> rank_all(const Matrix& gallery, const Matrix& queries,
                              bool exclude_self, Exec exec);

}  // namespace dml::kernels
