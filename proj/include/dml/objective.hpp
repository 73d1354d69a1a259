#pragma once

#include "dml/kernels.hpp"
#include "dml/memory.hpp"
#include "dml/types.hpp"

namespace dml {

// N unit-norm descriptors with integer class labels.
struct LabeledEmbeddingBatch {
  Matrix z;
  Labels labels;

  Eigen::Index size() const { return z.rows(); }
  Eigen::Index dim() const { return z.cols(); }
};

struct ContrastiveConfig {
  double beta = 0.5;
  double lambda = 0.7;
};

struct TermBreakdown {
  double positive = 0.0;  // (1/N) sum of 1 - s over positive pairs
  double negative = 0.0;  // (1/N) sum of [s - beta]_+ over negative pairs
  double koleo = 0.0;     // unweighted KoLeo value
};

struct LossOutput {
  double value = 0.0;
  Matrix grad;  // N x d, d loss / d z; memory rows are constants
  TermBreakdown terms;
};

// Throws ShapeError / NormalizationError when the batch breaks its
// invariants (row count, label count, unit rows within 1e-9).
void validate_batch(const LabeledEmbeddingBatch& batch, Eigen::Index min_rows = 1);

LossOutput contrastive_loss(const LabeledEmbeddingBatch& batch, const MemoryView* memory,
                            double beta,
                            kernels::Exec exec = kernels::default_exec());

// Kozachenko-Leonenko style spreading term, -(1/N) sum log rho_i, where rho_i
// is the distance from z_i to its nearest other batch row.
LossOutput koleo_loss(const LabeledEmbeddingBatch& batch,
                      kernels::Exec exec = kernels::default_exec());

LossOutput combined_loss(const LabeledEmbeddingBatch& batch, const MemoryView* memory,
                         const ContrastiveConfig& config,
                         kernels::Exec exec = kernels::default_exec());

// Chain rule through z = e / |e|: (I - z z^T) grad_z / |e|.
Vector backprop_through_normalization(const Vector& e, const Vector& grad_z);
Matrix backprop_through_normalization(const Matrix& e, const Matrix& grad_z);

double conditional_entropy_proxy(const LabeledEmbeddingBatch& batch);
double entropy_proxy(const LabeledEmbeddingBatch& batch, double beta);

void validate_contrastive_config(const ContrastiveConfig& config);

}  // namespace dml
