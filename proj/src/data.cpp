#include "dml/data.hpp"

#include "dml/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

namespace dml {

Matrix LabeledFeatureDataset::rows(const std::vector<std::size_t>& indices) const {
  Matrix out(static_cast<Eigen::Index>(indices.size()), dim());
  for (std::size_t r = 0; r < indices.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(indices[r]));
  return out;
}

void validate_synthetic_spec(const SyntheticSpec& spec) {
  if (spec.num_classes < 2) throw ConfigError("synthetic: num_classes must be >= 2");
  if (spec.per_class < 2) throw ConfigError("synthetic: per_class must be >= 2");
  if (spec.dim < 2) throw ConfigError("synthetic: dim must be >= 2");
  if (!(spec.sigma > 0.0)) throw ConfigError("synthetic: sigma must be > 0");
  if (spec.signal_dim < 0 || spec.signal_dim > spec.dim)
    throw ConfigError("synthetic: signal_dim must lie in [0, dim]");
  if (!(spec.nuisance_sigma >= 0.0)) throw ConfigError("synthetic: nuisance_sigma must be >= 0");
}

namespace {

Matrix class_means(const SyntheticSpec& spec, std::mt19937_64& rng) {
  const Eigen::Index signal = spec.signal_dim == 0 ? spec.dim : spec.signal_dim;
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix means = Matrix::Zero(spec.num_classes, spec.dim);
  for (int c = 0; c < spec.num_classes; ++c) {
    double norm = 0.0;
    do {
      for (Eigen::Index k = 0; k < signal; ++k) means(c, k) = normal(rng);
      norm = means.row(c).norm();
    } while (norm < 1e-12);
    means.row(c) /= norm;
  }
  return means;
}

}  // namespace

LabeledFeatureDataset make_synthetic(const SyntheticSpec& spec) {
  validate_synthetic_spec(spec);
  std::mt19937_64 rng(spec.seed);
  const Matrix means = class_means(spec, rng);
  const Eigen::Index signal = spec.signal_dim == 0 ? spec.dim : spec.signal_dim;
  std::normal_distribution<double> normal(0.0, 1.0);

  LabeledFeatureDataset data;
  data.features.resize(static_cast<Eigen::Index>(spec.num_classes) * spec.per_class, spec.dim);
  data.labels.reserve(static_cast<std::size_t>(data.features.rows()));
  Eigen::Index r = 0;
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int s = 0; s < spec.per_class; ++s, ++r) {
      for (Eigen::Index k = 0; k < spec.dim; ++k) {
        double v = means(c, k) + spec.sigma * normal(rng);
        if (k >= signal) v += spec.nuisance_sigma * normal(rng);
        data.features(r, k) = v;
      }
      data.labels.push_back(c);
    }
  }
  return data;
}

SyntheticGrids make_synthetic_grids(const SyntheticSpec& spec, Eigen::Index tokens) {
  if (tokens < 1) throw ConfigError("synthetic grids: need at least one token per item");
  const LabeledFeatureDataset base = make_synthetic(spec);
  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, spec.sigma);
  SyntheticGrids out;
  out.labels = base.labels;
  out.grids.reserve(static_cast<std::size_t>(base.size()));
  for (Eigen::Index i = 0; i < base.size(); ++i) {
    TokenGrid g{Vector(spec.dim), Matrix(tokens, spec.dim)};
    for (Eigen::Index k = 0; k < spec.dim; ++k) g.cls[k] = base.features(i, k) + normal(rng);
    for (Eigen::Index t = 0; t < tokens; ++t)
      for (Eigen::Index k = 0; k < spec.dim; ++k)
        g.tokens(t, k) = base.features(i, k) + normal(rng);
    out.grids.push_back(std::move(g));
  }
  return out;
}

LabeledFeatureDataset pool_grids(const std::vector<TokenGrid>& grids, const Labels& labels,
                                 PoolingMode mode, double p) {
  if (grids.size() != labels.size()) throw ShapeError("pool_grids: label count mismatch");
  LabeledFeatureDataset out;
  out.labels = labels;
  if (grids.empty()) return out;
  out.features.resize(static_cast<Eigen::Index>(grids.size()), grids.front().dim());
  for (std::size_t i = 0; i < grids.size(); ++i) {
    if (grids[i].dim() != out.features.cols())
      throw ShapeError("pool_grids: grid " + std::to_string(i) + " has a different dimension");
    out.features.row(static_cast<Eigen::Index>(i)) = pool(grids[i], mode, p).transpose();
  }
  return out;
}

ClassSplit split_by_class(const LabeledFeatureDataset& data, int train_classes) {
  std::map<int, int> order;
  for (int y : data.labels)
    if (!order.count(y)) order.emplace(y, static_cast<int>(order.size()));
  if (train_classes < 1 || train_classes >= static_cast<int>(order.size()))
    throw ConfigError("split_by_class: train_classes must leave both sides nonempty");
  std::vector<std::size_t> tr, te;
  for (std::size_t i = 0; i < data.labels.size(); ++i)
    (order[data.labels[i]] < train_classes ? tr : te).push_back(i);
  auto take = [&](const std::vector<std::size_t>& idx) {
    LabeledFeatureDataset d;
    d.features = data.rows(idx);
    for (auto i : idx) d.labels.push_back(data.labels[i]);
    return d;
  };
  return {take(tr), take(te)};
}

namespace {

// First k entries of a partial Fisher-Yates shuffle.
template <class T>
void partial_shuffle(std::vector<T>& v, std::size_t k, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < k && i + 1 < v.size(); ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, v.size() - 1);
    std::swap(v[i], v[pick(rng)]);
  }
}

}  // namespace

LabeledFeatureBatch sample_category_batch(const LabeledFeatureDataset& data,
                                          Eigen::Index batch_size,
                                          Eigen::Index instances_per_class,
                                          std::mt19937_64& rng) {
  if (instances_per_class < 1 || batch_size < 1 || batch_size % instances_per_class != 0)
    throw ConfigError("sampler: batch_size must be a positive multiple of instances_per_class");
  const auto ipc = static_cast<std::size_t>(instances_per_class);
  const auto num_classes = static_cast<std::size_t>(batch_size / instances_per_class);

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < data.labels.size(); ++i) by_class[data.labels[i]].push_back(i);
  std::vector<int> eligible;
  for (const auto& [label, members] : by_class)
    if (members.size() >= ipc) eligible.push_back(label);
  if (eligible.empty())
    throw SamplingError("sampler: no class has " + std::to_string(ipc) + " instances");
  if (eligible.size() < num_classes)
    throw SamplingError("sampler: need " + std::to_string(num_classes) +
                        " classes with enough instances, dataset has " +
                        std::to_string(eligible.size()));

  partial_shuffle(eligible, num_classes, rng);
  LabeledFeatureBatch batch;
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto members = by_class[eligible[c]];
    partial_shuffle(members, ipc, rng);
    for (std::size_t s = 0; s < ipc; ++s) {
      batch.indices.push_back(members[s]);
      batch.labels.push_back(eligible[c]);
    }
  }
  batch.features = data.rows(batch.indices);
  return batch;
}

std::vector<std::size_t> mine_hard_negatives(const Vector& anchor, const Matrix& pool,
                                             const Labels& pool_labels, int exclude_label,
                                             std::size_t k) {
  if (pool.rows() != static_cast<Eigen::Index>(pool_labels.size()))
    throw ShapeError("mine_hard_negatives: label count mismatch");
  if (pool.rows() > 0 && pool.cols() != anchor.size())
    throw ShapeError("mine_hard_negatives: dimension mismatch");
  std::vector<std::size_t> valid;
  std::vector<double> sims(pool_labels.size(), 0.0);
  for (std::size_t i = 0; i < pool_labels.size(); ++i) {
    if (pool_labels[i] == exclude_label) continue;
    sims[i] = pool.row(static_cast<Eigen::Index>(i)).dot(anchor);
    valid.push_back(i);
  }
  if (valid.size() < k)
    throw SamplingError("mine_hard_negatives: only " + std::to_string(valid.size()) +
                        " candidates with a different label, need " + std::to_string(k));
  std::partial_sort(valid.begin(), valid.begin() + static_cast<std::ptrdiff_t>(k), valid.end(),
                    [&](std::size_t a, std::size_t b) {
                      return sims[a] > sims[b] || (sims[a] == sims[b] && a < b);
                    });
  valid.resize(k);
  return valid;
}

TupleEpochPlan plan_tuple_epoch(const LabeledFeatureDataset& data, std::size_t num_pairs,
                                std::size_t pool_size, std::mt19937_64& rng) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < data.labels.size(); ++i) by_class[data.labels[i]].push_back(i);
  std::vector<std::size_t> anchors;
  for (std::size_t i = 0; i < data.labels.size(); ++i)
    if (by_class[data.labels[i]].size() >= 2) anchors.push_back(i);
  if (anchors.empty()) throw SamplingError("tuples: no class has two instances");

  TupleEpochPlan plan;
  std::uniform_int_distribution<std::size_t> pick_anchor(0, anchors.size() - 1);
  for (std::size_t p = 0; p < num_pairs; ++p) {
    const std::size_t a = anchors[pick_anchor(rng)];
    const auto& members = by_class[data.labels[a]];
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 2);
    const auto self = static_cast<std::size_t>(
        std::find(members.begin(), members.end(), a) - members.begin());
    std::size_t j = pick(rng);
    if (j >= self) ++j;
    const std::size_t pos = members[j];
    plan.pairs.emplace_back(a, pos);
  }

  std::vector<std::size_t> all(data.labels.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const std::size_t take = std::min(pool_size, all.size());
  partial_shuffle(all, take, rng);
  all.resize(take);
  plan.pool = std::move(all);
  return plan;
}

}  // namespace dml
