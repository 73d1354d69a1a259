#include "dml/memory.hpp"

#include "dml/error.hpp"
#include "dml/objective.hpp"

#include <cmath>
#include <string>

namespace dml {

MemoryBank::MemoryBank(std::size_t capacity, Eigen::Index dim)
    : capacity_(capacity), dim_(dim) {
  if (dim < 1) throw ShapeError("memory bank dimension must be positive");
}

std::size_t MemoryBank::capacity_from_ratio(double ratio, std::size_t dataset_size) {
  if (!(ratio >= 0.0) || !std::isfinite(ratio))
    throw ConfigError("memory capacity ratio must be a nonnegative number");
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(dataset_size)));
}

void MemoryBank::enqueue(const Matrix& descriptors, const Labels& labels) {
  if (descriptors.rows() > 0 && descriptors.cols() != dim_)
    throw ShapeError("enqueue: descriptor dimension " +
                     std::to_string(descriptors.cols()) + " does not match bank dimension " +
                     std::to_string(dim_));
  if (static_cast<Eigen::Index>(labels.size()) != descriptors.rows())
    throw ShapeError("enqueue: label count does not match descriptor rows");
  for (Eigen::Index i = 0; i < descriptors.rows(); ++i)
    if (std::abs(descriptors.row(i).norm() - 1.0) > 1e-9)
      throw NormalizationError("enqueue: row " + std::to_string(i) + " is not unit-norm");
  if (capacity_ == 0) return;
  for (Eigen::Index i = 0; i < descriptors.rows(); ++i) {
    if (entries_.size() == capacity_) entries_.pop_front();
    entries_.push_back({descriptors.row(i).transpose(), labels[i]});
  }
}

void MemoryBank::enqueue(const LabeledEmbeddingBatch& batch) {
  enqueue(batch.z, batch.labels);
}

MemoryView MemoryBank::view() const {
  MemoryView v;
  v.descriptors.resize(static_cast<Eigen::Index>(entries_.size()), dim_);
  v.labels.reserve(entries_.size());
  Eigen::Index r = 0;
  for (const auto& e : entries_) {
    v.descriptors.row(r++) = e.descriptor.transpose();
    v.labels.push_back(e.label);
  }
  return v;
}

MomentumTrack::MomentumTrack(Vector initial, double momentum)
    : shadow_(std::move(initial)), momentum_(momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw ConfigError("momentum must lie in [0, 1)");
}

void MomentumTrack::update(const Vector& online) {
  if (online.size() != shadow_.size())
    throw ShapeError("momentum_update: parameter count " + std::to_string(online.size()) +
                     " does not match shadow " + std::to_string(shadow_.size()));
  shadow_ = momentum_ * shadow_ + (1.0 - momentum_) * online;
}

}  // namespace dml
