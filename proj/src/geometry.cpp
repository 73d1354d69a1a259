#include "dml/geometry.hpp"

#include "dml/error.hpp"
#include "dml/kernels.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>

namespace dml {

PoolingMode parse_pooling_mode(std::string_view name) {
  if (name == "cls") return PoolingMode::cls;
  if (name == "avg") return PoolingMode::avg;
  if (name == "max") return PoolingMode::max;
  if (name == "gem") return PoolingMode::gem;
  throw ConfigError("unknown pooling mode '" + std::string(name) + "'");
}

std::string_view to_string(PoolingMode mode) {
  switch (mode) {
    case PoolingMode::cls: return "cls";
    case PoolingMode::avg: return "avg";
    case PoolingMode::max: return "max";
    case PoolingMode::gem: return "gem";
  }
  return "?";
}

Descriptor l2_normalize(const Vector& v) {
  if (!v.allFinite()) throw NormalizationError("l2_normalize: non-finite input");
  const double norm = v.norm();
  if (!(norm > 0.0) || !std::isfinite(norm))
    throw NormalizationError("l2_normalize: zero-norm input");
  return {v / norm, true};
}

void l2_normalize_rows(Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double norm = m.row(i).norm();
    if (!(norm > 0.0) || !std::isfinite(norm))
      throw NormalizationError("row " + std::to_string(i) +
                               " has zero or non-finite norm");
    m.row(i) /= norm;
  }
}

namespace {

void check_grid(const TokenGrid& grid, PoolingMode mode) {
  if (mode != PoolingMode::cls && grid.num_tokens() == 0)
    throw PoolingError("pool: token grid has no tokens");
  if (grid.num_tokens() > 0 && grid.tokens.cols() != grid.dim())
    throw ShapeError("pool: token dimension differs from CLS dimension");
  if (!grid.cls.allFinite() || !grid.tokens.allFinite())
    throw PoolingError("pool: non-finite grid entry");
}

Vector column_mean(const Matrix& tokens, double floor, bool clamp) {
  Vector out(tokens.cols());
  for (Eigen::Index k = 0; k < tokens.cols(); ++k) {
    double acc = 0.0;
    for (Eigen::Index t = 0; t < tokens.rows(); ++t)
      acc += clamp ? std::max(tokens(t, k), floor) : tokens(t, k);
    out[k] = acc / static_cast<double>(tokens.rows());
  }
  return out;
}

}  // namespace

Vector pool(const TokenGrid& grid, PoolingMode mode, double p) {
  check_grid(grid, mode);
  const Eigen::Index m = grid.num_tokens(), dim = grid.dim();
  switch (mode) {
    case PoolingMode::cls:
      return grid.cls;
    case PoolingMode::avg:
      return column_mean(grid.tokens, 0.0, false);
    case PoolingMode::max:
      return grid.tokens.colwise().maxCoeff().transpose();
    case PoolingMode::gem: {
      if (!(p >= 1.0)) throw PoolingError("pool: GeM exponent must be >= 1");
      if (p == 1.0) return column_mean(grid.tokens, kGemClamp, true);
      // Powers are taken relative to the column maximum so large p cannot
      // overflow: y = peak * (mean((x / peak)^p))^(1/p).
      Vector out(dim);
      for (Eigen::Index k = 0; k < dim; ++k) {
        const double peak = std::max(grid.tokens.col(k).maxCoeff(), kGemClamp);
        double acc = 0.0;
        for (Eigen::Index t = 0; t < m; ++t)
          acc += std::pow(std::max(grid.tokens(t, k), kGemClamp) / peak, p);
        out[k] = peak * std::pow(acc / static_cast<double>(m), 1.0 / p);
      }
      return out;
    }
  }
  throw PoolingError("pool: unknown mode");
}

TokenGrid pool_backward(const TokenGrid& grid, PoolingMode mode, double p,
                        const Vector& grad_pooled) {
  check_grid(grid, mode);
  if (grad_pooled.size() != grid.dim())
    throw ShapeError("pool_backward: gradient dimension mismatch");
  const Eigen::Index m = grid.num_tokens(), dim = grid.dim();
  TokenGrid g{Vector::Zero(dim), Matrix::Zero(m, dim)};
  switch (mode) {
    case PoolingMode::cls:
      g.cls = grad_pooled;
      break;
    case PoolingMode::avg:
      for (Eigen::Index t = 0; t < m; ++t)
        g.tokens.row(t) = grad_pooled.transpose() / static_cast<double>(m);
      break;
    case PoolingMode::max:
      for (Eigen::Index k = 0; k < dim; ++k) {
        Eigen::Index best = 0;
        for (Eigen::Index t = 1; t < m; ++t)
          if (grid.tokens(t, k) > grid.tokens(best, k)) best = t;
        g.tokens(best, k) = grad_pooled[k];
      }
      break;
    case PoolingMode::gem: {
      if (!(p >= 1.0)) throw PoolingError("pool: GeM exponent must be >= 1");
      // y = peak * (R/M)^(1/p), R = sum (x/peak)^p
      //   => dy/dx_t = (R/M)^(1/p - 1) (x_t/peak)^(p-1) / M
      for (Eigen::Index k = 0; k < dim; ++k) {
        const double peak = std::max(grid.tokens.col(k).maxCoeff(), kGemClamp);
        double acc = 0.0;
        for (Eigen::Index t = 0; t < m; ++t)
          acc += std::pow(std::max(grid.tokens(t, k), kGemClamp) / peak, p);
        const double outer =
            std::pow(acc / static_cast<double>(m), 1.0 / p - 1.0) / static_cast<double>(m);
        for (Eigen::Index t = 0; t < m; ++t) {
          const double x = grid.tokens(t, k);
          if (x <= kGemClamp) continue;
          g.tokens(t, k) = grad_pooled[k] * outer * std::pow(x / peak, p - 1.0);
        }
      }
      break;
    }
  }
  return g;
}

Matrix cosine_similarity_matrix(const Matrix& a, const Matrix& b) {
  Matrix out;
  kernels::gram(a, b, out, kernels::default_exec());
  return out;
}

PcaModel pca_fit(const Matrix& x, Eigen::Index out_dim) {
  const Eigen::Index n = x.rows(), dim = x.cols();
  if (n < 2) throw ShapeError("pca_fit: need at least 2 rows");
  if (out_dim < 1 || out_dim > std::min(n - 1, dim))
    throw ShapeError("pca_fit: out_dim " + std::to_string(out_dim) +
                     " outside [1, min(n-1, D)] = [1, " +
                     std::to_string(std::min(n - 1, dim)) + "]");
  if (!x.allFinite()) throw NumericalError("pca_fit: non-finite input");

  PcaModel model;
  model.mean = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - model.mean.transpose();
  const Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success)
    throw NumericalError("pca_fit: eigendecomposition failed");

  // Eigen returns ascending eigenvalues.
  model.components.resize(out_dim, dim);
  model.eigenvalues.resize(out_dim);
  for (Eigen::Index c = 0; c < out_dim; ++c) {
    const Eigen::Index src = dim - 1 - c;
    Vector v = solver.eigenvectors().col(src);
    Eigen::Index arg = 0;
    for (Eigen::Index k = 1; k < dim; ++k)
      if (std::abs(v[k]) > std::abs(v[arg])) arg = k;
    if (v[arg] < 0) v = -v;
    model.components.row(c) = v.transpose();
    model.eigenvalues[c] = std::max(0.0, solver.eigenvalues()[src]);
  }
  return model;
}

Vector pca_project(const PcaModel& model, const Vector& v) {
  if (v.size() != model.in_dim())
    throw ShapeError("pca_transform: input dimension " + std::to_string(v.size()) +
                     " does not match model dimension " +
                     std::to_string(model.in_dim()));
  return model.components * (v - model.mean);
}

Descriptor pca_transform(const PcaModel& model, const Vector& v) {
  return l2_normalize(pca_project(model, v));
}

Vector cumulative_energy(const Vector& eigenvalues) {
  if (eigenvalues.size() == 0) throw NumericalError("cumulative_energy: empty spectrum");
  if (!eigenvalues.allFinite() || (eigenvalues.array() < 0.0).any())
    throw NumericalError("cumulative_energy: spectrum must be finite and nonnegative");
  double total = 0.0;
  for (Eigen::Index k = 0; k < eigenvalues.size(); ++k) total += eigenvalues[k];
  if (!(total > 0.0)) throw NumericalError("cumulative_energy: all-zero spectrum");
  Vector out(eigenvalues.size());
  double partial = 0.0;
  for (Eigen::Index k = 0; k < eigenvalues.size(); ++k) {
    partial += eigenvalues[k];
    out[k] = partial / total;
  }
  return out;
}

}  // namespace dml
