#pragma once

#include "dml/types.hpp"

#include <random>

namespace dml {

struct HeadSpec {
  Eigen::Index in_dim = 0;
  Eigen::Index hidden = 0;  // 0 selects a single linear layer
  Eigen::Index out_dim = 0;
};

// Small embedding head standing in for a backbone: either a linear map or
// a one-hidden-layer perceptron with tanh. Weight matrices are out x in.
class EncoderHead {
 public:
  struct Cache {
    Matrix input;
    Matrix hidden_act;  // tanh output; empty for linear heads
    Matrix embeddings;  // E, pre-normalization
    Matrix normalized;  // Z
  };

  EncoderHead() = default;
  explicit EncoderHead(const HeadSpec& spec);

  // Glorot-uniform weights, zero biases.
  static EncoderHead random(const HeadSpec& spec, std::mt19937_64& rng);
  static EncoderHead identity(Eigen::Index dim);

  const HeadSpec& spec() const { return spec_; }
  Eigen::Index num_params() const;

  Vector flatten() const;
  void assign(const Vector& flat);

  // Throws NormalizationError naming the first zero-norm embedding row.
  Cache forward(const Matrix& x) const;
  Matrix embed(const Matrix& x) const;

  // d loss / d params given d loss / d E, flattened in the same order as
  // flatten().
  Vector backward(const Cache& cache, const Matrix& grad_embeddings) const;

  bool operator==(const EncoderHead& other) const;

  Matrix w1, w2;
  Vector b1, b2;

 private:
  HeadSpec spec_;
};

}  // namespace dml
