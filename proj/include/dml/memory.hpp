#pragma once

#include "dml/types.hpp"

#include <cstddef>
#include <deque>

namespace dml {

struct LabeledEmbeddingBatch;

// Read-only snapshot of a memory bank, oldest entry first.
struct MemoryView {
  Matrix descriptors;  // K x d, unit rows
  Labels labels;

  Eigen::Index size() const { return descriptors.rows(); }
  bool empty() const { return size() == 0; }
};

// Cross-batch memory: FIFO of normalized descriptors and their labels.
class MemoryBank {
 public:
  MemoryBank(std::size_t capacity, Eigen::Index dim);

  // Resolves a fractional capacity against a dataset size: floor(ratio * n).
  static std::size_t capacity_from_ratio(double ratio, std::size_t dataset_size);

  void enqueue(const Matrix& descriptors, const Labels& labels);
  void enqueue(const LabeledEmbeddingBatch& batch);

  MemoryView view() const;

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  Eigen::Index dim() const { return dim_; }

 private:
  struct Entry {
    Vector descriptor;
    int label;
  };
  std::size_t capacity_;
  Eigen::Index dim_;
  std::deque<Entry> entries_;
};

// Exponential moving average of a flat parameter vector.
class MomentumTrack {
 public:
  MomentumTrack(Vector initial, double momentum);

  void update(const Vector& online);

  const Vector& shadow() const { return shadow_; }
  double momentum() const { return momentum_; }

 private:
  Vector shadow_;
  double momentum_;
};

}  // namespace dml
