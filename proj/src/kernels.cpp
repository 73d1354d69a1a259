#include "dml/kernels.hpp"

#include "dml/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace dml::kernels {

namespace {
std::atomic<Exec> g_default_exec{Exec::parallel};

bool use_threads(Exec exec) { return exec == Exec::parallel; }
}  // namespace

Exec default_exec() { return g_default_exec.load(); }
void set_default_exec(Exec exec) { g_default_exec.store(exec); }

double dot(const double* a, const double* b, Eigen::Index n) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) s += a[k] * b[k];
  return s;
}

void gram(const Matrix& a, const Matrix& b, Matrix& out, Exec exec) {
  if (a.cols() != b.cols())
    throw ShapeError("gram: dimension mismatch " + std::to_string(a.cols()) +
                     " vs " + std::to_string(b.cols()));
  const Eigen::Index n = a.rows(), m = b.rows(), d = a.cols();
  out.resize(n, m);
#pragma omp parallel for schedule(static) if (use_threads(exec))
  for (Eigen::Index i = 0; i < n; ++i) {
    const double* ai = a.row(i).data();
    for (Eigen::Index j = 0; j < m; ++j) out(i, j) = dot(ai, b.row(j).data(), d);
  }
}

ContrastiveRows contrastive_rows(const Matrix& z, std::span<const int> labels,
                                 const Matrix& memory,
                                 std::span<const int> memory_labels,
                                 double beta, Exec exec) {
  const Eigen::Index n = z.rows(), d = z.cols();
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw ShapeError("contrastive: label count does not match batch rows");
  if (memory.rows() > 0 && memory.cols() != d)
    throw ShapeError("contrastive: memory dimension does not match batch");
  if (static_cast<Eigen::Index>(memory_labels.size()) != memory.rows())
    throw ShapeError("contrastive: memory label count mismatch");

  ContrastiveRows out;
  out.positive.assign(n, 0.0);
  out.negative.assign(n, 0.0);
  out.grad = Matrix::Zero(n, d);
  const double inv_n = 1.0 / static_cast<double>(n);

#pragma omp parallel for schedule(static) if (use_threads(exec))
  for (Eigen::Index i = 0; i < n; ++i) {
    const double* zi = z.row(i).data();
    double pos = 0.0, neg = 0.0;
    double* gi = out.grad.row(i).data();
    // Batch partners: pair (i, j) is visited from anchor i and from anchor
    // j, and both visits put the same coefficient on z_j in d/dz_i.
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double* zj = z.row(j).data();
      const double s = dot(zi, zj, d);
      double coeff = 0.0;
      if (labels[i] == labels[j]) {
        pos += 1.0 - s;
        coeff = -2.0;
      } else if (s > beta) {
        neg += s - beta;
        coeff = 2.0;
      }
      if (coeff != 0.0)
        for (Eigen::Index k = 0; k < d; ++k) gi[k] += coeff * zj[k];
    }
    for (Eigen::Index j = 0; j < memory.rows(); ++j) {
      const double* mj = memory.row(j).data();
      const double s = dot(zi, mj, d);
      double coeff = 0.0;
      if (labels[i] == memory_labels[j]) {
        pos += 1.0 - s;
        coeff = -1.0;
      } else if (s > beta) {
        neg += s - beta;
        coeff = 1.0;
      }
      if (coeff != 0.0)
        for (Eigen::Index k = 0; k < d; ++k) gi[k] += coeff * mj[k];
    }
    for (Eigen::Index k = 0; k < d; ++k) gi[k] *= inv_n;
    out.positive[i] = pos;
    out.negative[i] = neg;
  }
  return out;
}

std::vector<Neighbor> nearest_neighbors(const Matrix& z, Exec exec) {
  const Eigen::Index n = z.rows(), d = z.cols();
  std::vector<Neighbor> out(n);
#pragma omp parallel for schedule(static) if (use_threads(exec))
  for (Eigen::Index i = 0; i < n; ++i) {
    Neighbor best{-1, std::numeric_limits<double>::infinity()};
    const double* zi = z.row(i).data();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double* zj = z.row(j).data();
      double sq = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        const double diff = zi[k] - zj[k];
        sq += diff * diff;
      }
      const double dist = std::sqrt(sq);
      if (dist < best.distance) best = {j, dist};
    }
    out[i] = best;
  }
  return out;
}

std::vector<Ranking> rank_all(const Matrix& gallery, const Matrix& queries,
                              bool exclude_self, Exec exec) {
  if (gallery.cols() != queries.cols())
    throw ShapeError("retrieve: query dimension " +
                     std::to_string(queries.cols()) +
                     " does not match gallery dimension " +
                     std::to_string(gallery.cols()));
  if (exclude_self && queries.rows() > gallery.rows())
    throw ShapeError("retrieve: exclude_self needs queries to index the gallery");
  const Eigen::Index m = queries.rows(), n = gallery.rows(), d = gallery.cols();
  std::vector<Ranking> out(m);
#pragma omp parallel for schedule(dynamic, 4) if (use_threads(exec))
  for (Eigen::Index q = 0; q < m; ++q) {
    std::vector<double> scores(n);
    const double* qv = queries.row(q).data();
    for (Eigen::Index j = 0; j < n; ++j) scores[j] = dot(qv, gallery.row(j).data(), d);
    std::vector<Eigen::Index> order;
    order.reserve(n);
    for (Eigen::Index j = 0; j < n; ++j)
      if (!(exclude_self && j == q)) order.push_back(j);
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return scores[a] > scores[b]; });
    Ranking r;
    r.scores.reserve(order.size());
    for (Eigen::Index j : order) r.scores.push_back(scores[j]);
    r.order = std::move(order);
    out[q] = std::move(r);
  }
  return out;
}

}  // namespace dml::kernels
