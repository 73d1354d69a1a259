#pragma once

#include "dml/geometry.hpp"
#include "dml/types.hpp"

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace dml {

struct LabeledFeatureDataset {
  Matrix features;  // n x F
  Labels labels;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
  Matrix rows(const std::vector<std::size_t>& indices) const;
};

struct LabeledFeatureBatch {
  Matrix features;
  Labels labels;
  std::vector<std::size_t> indices;  // rows of the source dataset
};

// Class means are uniform on the unit sphere of the first signal_dim
// coordinates; each sample adds isotropic N(0, sigma^2) noise and, on the
// remaining coordinates, N(0, nuisance_sigma^2) noise that carries no class
// information.
struct SyntheticSpec {
  int num_classes = 16;
  int per_class = 16;
  Eigen::Index dim = 32;
  double sigma = 0.1;
  std::uint64_t seed = 0;
  Eigen::Index signal_dim = 0;  // 0 means the full feature dimension
  double nuisance_sigma = 0.0;
};

void validate_synthetic_spec(const SyntheticSpec& spec);
LabeledFeatureDataset make_synthetic(const SyntheticSpec& spec);

// Token-grid variant: every item gets `tokens` patch tokens and a CLS vector,
// each the item's feature vector plus independent N(0, sigma^2) jitter.
struct SyntheticGrids {
  std::vector<TokenGrid> grids;
  Labels labels;
};
SyntheticGrids make_synthetic_grids(const SyntheticSpec& spec, Eigen::Index tokens);

LabeledFeatureDataset pool_grids(const std::vector<TokenGrid>& grids, const Labels& labels,
                                 PoolingMode mode, double p);

// Class-disjoint split: items whose label is among the first `train_classes`
// distinct labels (in order of first appearance) go to train.
struct ClassSplit {
  LabeledFeatureDataset train;
  LabeledFeatureDataset test;
};
ClassSplit split_by_class(const LabeledFeatureDataset& data, int train_classes);

// Draws batch_size / instances_per_class distinct classes, each contributing
// instances_per_class distinct samples.
LabeledFeatureBatch sample_category_batch(const LabeledFeatureDataset& data,
                                          Eigen::Index batch_size,
                                          Eigen::Index instances_per_class,
                                          std::mt19937_64& rng);

// Indices of the k pool rows most similar to the anchor among rows whose
// label differs from exclude_label, most similar first; ties by index.
std::vector<std::size_t> mine_hard_negatives(const Vector& anchor, const Matrix& pool,
                                             const Labels& pool_labels, int exclude_label,
                                             std::size_t k = 5);

// Indices into the training dataset.
struct TupleSample {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::vector<std::size_t> negatives;
};

// Picks num_pairs random (anchor, positive) pairs and a random candidate
// pool of pool_size items (without replacement).
struct TupleEpochPlan {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<std::size_t> pool;
};
TupleEpochPlan plan_tuple_epoch(const LabeledFeatureDataset& data, std::size_t num_pairs,
                                std::size_t pool_size, std::mt19937_64& rng);

}  // namespace dml
