#pragma once

#include "dml/types.hpp"

#include <string_view>

namespace dml {

// Per-image output of a transformer-style backbone: one class token plus M
// patch tokens, all of dimension D. Tokens are stored one per row.
struct TokenGrid {
  Vector cls;
  Matrix tokens;

  Eigen::Index dim() const { return cls.size(); }
  Eigen::Index num_tokens() const { return tokens.rows(); }
};

struct Descriptor {
  Vector values;
  bool normalized = false;
};

enum class PoolingMode { cls, avg, max, gem };

PoolingMode parse_pooling_mode(std::string_view name);
std::string_view to_string(PoolingMode mode);

inline constexpr double kGemClamp = 1e-6;

Descriptor l2_normalize(const Vector& v);

// Normalizes every row in place. Throws NormalizationError naming the first
// offending row.
void l2_normalize_rows(Matrix& m);

Vector pool(const TokenGrid& grid, PoolingMode mode, double p = 3.0);

// Gradient of pool() with respect to the grid, given the gradient of the
// pooled vector. Max pooling routes to the first maximal token; GeM entries
// at or below the clamp receive zero.
TokenGrid pool_backward(const TokenGrid& grid, PoolingMode mode, double p,
                        const Vector& grad_pooled);

Matrix cosine_similarity_matrix(const Matrix& a, const Matrix& b);

struct PcaModel {
  Vector mean;
  Matrix components;  // out_dim x D, orthonormal rows
  Vector eigenvalues; // nonincreasing, nonnegative

  Eigen::Index in_dim() const { return mean.size(); }
  Eigen::Index out_dim() const { return components.rows(); }
};

// Covariance eigendecomposition (n-1 denominator). Each component is signed
// so that its largest-magnitude entry is positive; the first such entry wins
// on magnitude ties.
PcaModel pca_fit(const Matrix& x, Eigen::Index out_dim);

// components * (v - mean), without normalization.
Vector pca_project(const PcaModel& model, const Vector& v);

Descriptor pca_transform(const PcaModel& model, const Vector& v);

Vector cumulative_energy(const Vector& eigenvalues);

}  // namespace dml
