#pragma once

// Shared generators and independent reference computations for the tests.
// Nothing here calls into the library code paths it is used to check.

#include "dml/types.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cstring>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace dml::testing {

inline Matrix random_unit_rows(Eigen::Index n, Eigen::Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < d; ++k) m(i, k) = g(rng);
    m.row(i) /= m.row(i).norm();
  }
  return m;
}

// Rows scattered around one random center per label, so that both positive
// and negative hinge terms are populated.
inline Matrix clustered_unit_rows(const Labels& labels, Eigen::Index d, double spread,
                                  std::mt19937_64& rng) {
  const int classes = *std::max_element(labels.begin(), labels.end()) + 1;
  const Matrix centers = random_unit_rows(classes, d, rng);
  std::normal_distribution<double> g;
  Matrix m(static_cast<Eigen::Index>(labels.size()), d);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index k = 0; k < d; ++k) m(i, k) = centers(labels[i], k) + spread * g(rng);
    m.row(i) /= m.row(i).norm();
  }
  return m;
}

inline Labels random_labels(std::size_t n, int classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, classes - 1);
  Labels y(n);
  for (auto& v : y) v = u(rng);
  return y;
}

inline Matrix random_orthogonal(Eigen::Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd a(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) a(i, j) = g(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  return Matrix(qr.householderQ());
}

inline double raw_dot(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
  return s;
}

inline double raw_dist(const Matrix& z, Eigen::Index i, Eigen::Index j) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < z.cols(); ++k) s += (z(i, k) - z(j, k)) * (z(i, k) - z(j, k));
  return std::sqrt(s);
}

// Literal double sum of the margin contrastive loss over batch and memory
// partners; no unit-norm assumption so it can be finite-differenced.
inline double contrastive_oracle(const Matrix& z, const Labels& y, double beta,
                                 const Matrix& mem = Matrix(), const Labels& my = {}) {
  const Eigen::Index n = z.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double s = raw_dot(z, i, z, j);
      total += y[i] == y[j] ? 1.0 - s : std::max(s - beta, 0.0);
    }
    for (Eigen::Index j = 0; j < mem.rows(); ++j) {
      const double s = raw_dot(z, i, mem, j);
      total += y[i] == my[j] ? 1.0 - s : std::max(s - beta, 0.0);
    }
  }
  return total / static_cast<double>(n);
}

inline double koleo_oracle(const Matrix& z) {
  const Eigen::Index n = z.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) best = std::min(best, raw_dist(z, i, j));
    total += std::log(best);
  }
  return -total / static_cast<double>(n);
}

// Smallest |s - beta| over every pair the loss sees.
inline double hinge_slack(const Matrix& z, double beta, const Matrix& mem = Matrix()) {
  double slack = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < z.rows(); ++j)
      slack = std::min(slack, std::abs(raw_dot(z, i, z, j) - beta));
    for (Eigen::Index j = 0; j < mem.rows(); ++j)
      slack = std::min(slack, std::abs(raw_dot(z, i, mem, j) - beta));
  }
  return slack;
}

// Smallest gap between nearest and second-nearest neighbour distance.
inline double neighbor_gap(const Matrix& z) {
  double gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    std::vector<double> d;
    for (Eigen::Index j = 0; j < z.rows(); ++j)
      if (j != i) d.push_back(raw_dist(z, i, j));
    std::sort(d.begin(), d.end());
    if (d.size() >= 2) gap = std::min(gap, d[1] - d[0]);
  }
  return gap;
}

// Central differences of f over every entry of x.
inline Matrix finite_difference(const std::function<double(const Matrix&)>& f, Matrix x,
                                double h = 1e-6) {
  Matrix g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index k = 0; k < x.cols(); ++k) {
      const double keep = x(i, k);
      x(i, k) = keep + h;
      const double up = f(x);
      x(i, k) = keep - h;
      const double down = f(x);
      x(i, k) = keep;
      g(i, k) = (up - down) / (2.0 * h);
    }
  return g;
}

inline Vector finite_difference_vec(const std::function<double(const Vector&)>& f, Vector x,
                                    double h = 1e-6) {
  Vector g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double keep = x[k];
    x[k] = keep + h;
    const double up = f(x);
    x[k] = keep - h;
    const double down = f(x);
    x[k] = keep;
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

template <class A, class B>
double relative_error(const A& analytic, const B& numeric) {
  const double scale = std::max({analytic.norm(), numeric.norm(), 1e-8});
  return (analytic - numeric).norm() / scale;
}

inline bool bitwise_equal(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return std::equal(a.data(), a.data() + a.size(), b.data(), [](double x, double y) {
    return std::memcmp(&x, &y, sizeof(double)) == 0;
  });
}

}  // namespace dml::testing
