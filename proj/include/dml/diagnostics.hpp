#pragma once

#include "dml/objective.hpp"
#include "dml/types.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace dml {

struct SimilarityHistogram {
  std::vector<double> edges;  // num_bins + 1 equally spaced edges on [-1, 1]
  std::vector<std::uint64_t> positive;
  std::vector<std::uint64_t> negative;

  std::size_t num_bins() const { return positive.size(); }
  std::uint64_t positive_total() const;
  std::uint64_t negative_total() const;
};

// Bins every unordered pair i < j by cosine similarity. The last bin is
// closed on the right; similarities a rounding error outside [-1, 1] land
// in the end bins.
SimilarityHistogram similarity_histograms(const Matrix& z, const Labels& labels, int num_bins);

std::size_t histogram_bin(double similarity, int num_bins);

// Shared mass of the normalized positive and negative histograms,
// sum_b min(p_b, n_b), in [0, 1].
double histogram_overlap(const SimilarityHistogram& h);

struct PcaEnergyReport {
  Vector eigenvalues;
  Vector cumulative;
  Eigen::Index components_50 = 0;
  Eigen::Index components_90 = 0;
  Eigen::Index components_95 = 0;
};

// Smallest k (1-based) with cumulative[k-1] >= threshold.
Eigen::Index components_for(const Vector& cumulative, double threshold);

PcaEnergyReport pca_energy_report(const Matrix& z);

// Nuclear norm of the covariance of the unit-normalized rows of
// per_sample_grads (1/n denominator). Zero rows are dropped; returns nullopt
// when fewer than two remain.
std::optional<double> gradient_direction_gamma(const Matrix& per_sample_grads);

struct GradientNoiseReport {
  double gamma = 0.0;
  long num_steps = 0;     // steps that contributed
  long skipped_steps = 0;
  double beta = 0.0;
  double lambda = 0.0;
};

class GammaAccumulator {
 public:
  void add(const Matrix& per_sample_grads);
  // Throws NumericalError when no step contributed.
  GradientNoiseReport report(double beta, double lambda) const;
  long measured() const { return used_; }

 private:
  double sum_ = 0.0;
  long used_ = 0;
  long skipped_ = 0;
};

enum class GammaObjective { contrastive, combined };

struct GammaStep {
  LabeledEmbeddingBatch batch;
  MemoryView memory;
};

// Averages gradient_direction_gamma over a recorded stream of training
// batches, using the gradient of the chosen objective w.r.t. z.
GradientNoiseReport gradient_covariance_gamma(const ContrastiveConfig& config,
                                              std::span<const GammaStep> stream,
                                              GammaObjective objective = GammaObjective::contrastive);

}  // namespace dml
