#include "dml/objective.hpp"

#include "dml/error.hpp"

#include <cmath>
#include <string>

namespace dml {

namespace {

constexpr double kUnitTolerance = 1e-9;
constexpr double kMinNeighborDistance = 1e-12;

void check_unit_rows(const Matrix& z, const char* what) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double norm = z.row(i).norm();
    if (!std::isfinite(norm) || std::abs(norm - 1.0) > kUnitTolerance)
      throw NormalizationError(std::string(what) + " row " + std::to_string(i) +
                               " is not unit-norm (norm " + std::to_string(norm) + ")");
  }
}

void check_beta(double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("margin beta must lie in (0, 1)");
}

}  // namespace

void validate_batch(const LabeledEmbeddingBatch& batch, Eigen::Index min_rows) {
  if (batch.size() < min_rows)
    throw ShapeError("batch has " + std::to_string(batch.size()) + " rows, need at least " +
                     std::to_string(min_rows));
  if (static_cast<Eigen::Index>(batch.labels.size()) != batch.size())
    throw ShapeError("batch label count does not match rows");
  check_unit_rows(batch.z, "batch");
}

void validate_contrastive_config(const ContrastiveConfig& config) {
  check_beta(config.beta);
  if (!(config.lambda >= 0.0) || !std::isfinite(config.lambda))
    throw ConfigError("lambda must be a nonnegative number");
}

LossOutput contrastive_loss(const LabeledEmbeddingBatch& batch, const MemoryView* memory,
                            double beta, kernels::Exec exec) {
  validate_batch(batch, 1);
  check_beta(beta);
  static const MemoryView kEmpty{};
  const MemoryView& mem = memory ? *memory : kEmpty;
  if (!mem.empty()) {
    if (mem.descriptors.cols() != batch.dim())
      throw ShapeError("memory dimension does not match batch dimension");
    check_unit_rows(mem.descriptors, "memory");
  }

  auto rows = kernels::contrastive_rows(batch.z, batch.labels, mem.descriptors, mem.labels,
                                        beta, exec);
  double pos = 0.0, neg = 0.0;
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    pos += rows.positive[i];
    neg += rows.negative[i];
  }
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  LossOutput out;
  out.terms.positive = pos * inv_n;
  out.terms.negative = neg * inv_n;
  out.value = out.terms.positive + out.terms.negative;
  out.grad = std::move(rows.grad);
  return out;
}

LossOutput koleo_loss(const LabeledEmbeddingBatch& batch, kernels::Exec exec) {
  validate_batch(batch, 2);
  const Eigen::Index n = batch.size();
  const auto nn = kernels::nearest_neighbors(batch.z, exec);
  const double inv_n = 1.0 / static_cast<double>(n);

  LossOutput out;
  out.grad = Matrix::Zero(n, batch.dim());
  double sum_log = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double rho = nn[i].distance;
    if (!(rho >= kMinNeighborDistance))
      throw DegenerateBatchError("koleo: row " + std::to_string(i) +
                                 " coincides with row " + std::to_string(nn[i].index));
    sum_log += std::log(rho);
    // d(-log rho)/dz_i = -(z_i - z_nn) / rho^2, opposite sign on z_nn.
    const Eigen::Index j = nn[i].index;
    const double scale = inv_n / (rho * rho);
    for (Eigen::Index k = 0; k < batch.dim(); ++k) {
      const double g = scale * (batch.z(i, k) - batch.z(j, k));
      out.grad(i, k) -= g;
      out.grad(j, k) += g;
    }
  }
  out.value = -sum_log * inv_n;
  out.terms.koleo = out.value;
  return out;
}

LossOutput combined_loss(const LabeledEmbeddingBatch& batch, const MemoryView* memory,
                         const ContrastiveConfig& config, kernels::Exec exec) {
  validate_contrastive_config(config);
  LossOutput out = contrastive_loss(batch, memory, config.beta, exec);
  if (config.lambda == 0.0) return out;
  const LossOutput reg = koleo_loss(batch, exec);
  out.terms.koleo = reg.value;
  out.value += config.lambda * reg.value;
  out.grad += config.lambda * reg.grad;
  return out;
}

Vector backprop_through_normalization(const Vector& e, const Vector& grad_z) {
  if (e.size() != grad_z.size()) throw ShapeError("backprop: dimension mismatch");
  const double norm = e.norm();
  if (!(norm > 0.0) || !std::isfinite(norm))
    throw NormalizationError("backprop: zero-norm embedding");
  const Vector z = e / norm;
  return (grad_z - z * z.dot(grad_z)) / norm;
}

Matrix backprop_through_normalization(const Matrix& e, const Matrix& grad_z) {
  if (e.rows() != grad_z.rows() || e.cols() != grad_z.cols())
    throw ShapeError("backprop: shape mismatch");
  Matrix out(e.rows(), e.cols());
  for (Eigen::Index i = 0; i < e.rows(); ++i)
    out.row(i) = backprop_through_normalization(Vector(e.row(i).transpose()),
                                                Vector(grad_z.row(i).transpose()))
                     .transpose();
  return out;
}

double conditional_entropy_proxy(const LabeledEmbeddingBatch& batch) {
  validate_batch(batch, 1);
  // Any beta works here; only the positive sums are read.
  const auto rows = kernels::contrastive_rows(batch.z, batch.labels, Matrix(0, batch.dim()),
                                              {}, 0.5, kernels::default_exec());
  double sum = 0.0;
  for (double v : rows.positive) sum += v;
  return sum / static_cast<double>(batch.size());
}

double entropy_proxy(const LabeledEmbeddingBatch& batch, double beta) {
  validate_batch(batch, 1);
  check_beta(beta);
  const auto rows = kernels::contrastive_rows(batch.z, batch.labels, Matrix(0, batch.dim()),
                                              {}, beta, kernels::default_exec());
  double sum = 0.0;
  for (double v : rows.negative) sum += v;
  return -sum / static_cast<double>(batch.size());
}

}  // namespace dml
