#include "dml/diagnostics.hpp"

#include "dml/error.hpp"
#include "dml/geometry.hpp"
#include "dml/kernels.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dml {

std::uint64_t SimilarityHistogram::positive_total() const {
  return std::accumulate(positive.begin(), positive.end(), std::uint64_t{0});
}

std::uint64_t SimilarityHistogram::negative_total() const {
  return std::accumulate(negative.begin(), negative.end(), std::uint64_t{0});
}

std::size_t histogram_bin(double similarity, int num_bins) {
  const double scaled = (similarity + 1.0) / 2.0 * static_cast<double>(num_bins);
  const double clamped = std::clamp(std::floor(scaled), 0.0, static_cast<double>(num_bins - 1));
  return static_cast<std::size_t>(clamped);
}

SimilarityHistogram similarity_histograms(const Matrix& z, const Labels& labels, int num_bins) {
  if (z.rows() < 2) throw ShapeError("similarity_histograms: need at least 2 rows");
  if (num_bins < 2) throw ConfigError("similarity_histograms: need at least 2 bins");
  if (static_cast<Eigen::Index>(labels.size()) != z.rows())
    throw ShapeError("similarity_histograms: label count mismatch");
  SimilarityHistogram h;
  h.edges.resize(static_cast<std::size_t>(num_bins) + 1);
  for (int b = 0; b <= num_bins; ++b)
    h.edges[b] = -1.0 + 2.0 * static_cast<double>(b) / static_cast<double>(num_bins);
  h.positive.assign(num_bins, 0);
  h.negative.assign(num_bins, 0);

  Matrix sims;
  kernels::gram(z, z, sims, kernels::default_exec());
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = i + 1; j < z.rows(); ++j) {
      const std::size_t b = histogram_bin(sims(i, j), num_bins);
      (labels[i] == labels[j] ? h.positive : h.negative)[b] += 1;
    }
  return h;
}

double histogram_overlap(const SimilarityHistogram& h) {
  const double p = static_cast<double>(h.positive_total());
  const double n = static_cast<double>(h.negative_total());
  if (p == 0.0 || n == 0.0) throw ProtocolError("histogram_overlap: an empty histogram");
  double shared = 0.0;
  for (std::size_t b = 0; b < h.num_bins(); ++b)
    shared += std::min(static_cast<double>(h.positive[b]) / p,
                       static_cast<double>(h.negative[b]) / n);
  return shared;
}

Eigen::Index components_for(const Vector& cumulative, double threshold) {
  for (Eigen::Index k = 0; k < cumulative.size(); ++k)
    if (cumulative[k] >= threshold) return k + 1;
  return cumulative.size();
}

PcaEnergyReport pca_energy_report(const Matrix& z) {
  if (z.rows() < 2) throw ShapeError("pca_energy_report: need at least 2 rows");
  const Vector mean = z.colwise().mean().transpose();
  const double spread = (z.rowwise() - mean.transpose()).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, z.cwiseAbs().maxCoeff());
  if (!(spread > 1e-12 * scale))
    throw NumericalError("pca_energy_report: all rows are equal");

  const PcaModel model = pca_fit(z, std::min(z.rows() - 1, z.cols()));
  PcaEnergyReport r;
  r.eigenvalues = model.eigenvalues;
  r.cumulative = cumulative_energy(model.eigenvalues);
  r.components_50 = components_for(r.cumulative, 0.50);
  r.components_90 = components_for(r.cumulative, 0.90);
  r.components_95 = components_for(r.cumulative, 0.95);
  return r;
}

std::optional<double> gradient_direction_gamma(const Matrix& per_sample_grads) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < per_sample_grads.rows(); ++i) {
    const double norm = per_sample_grads.row(i).norm();
    if (norm > 0.0 && std::isfinite(norm)) keep.push_back(i);
  }
  if (keep.size() < 2) return std::nullopt;
  const auto n = static_cast<Eigen::Index>(keep.size());
  Matrix dirs(n, per_sample_grads.cols());
  for (Eigen::Index r = 0; r < n; ++r)
    dirs.row(r) = per_sample_grads.row(keep[r]) / per_sample_grads.row(keep[r]).norm();
  const Matrix centered = dirs.rowwise() - dirs.colwise().mean();
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success)
    throw NumericalError("gamma: eigendecomposition failed");
  return solver.eigenvalues().cwiseAbs().sum();
}

void GammaAccumulator::add(const Matrix& per_sample_grads) {
  if (const auto g = gradient_direction_gamma(per_sample_grads)) {
    sum_ += *g;
    ++used_;
  } else {
    ++skipped_;
  }
}

GradientNoiseReport GammaAccumulator::report(double beta, double lambda) const {
  if (used_ == 0) throw NumericalError("gamma: every measured step was skipped");
  return {sum_ / static_cast<double>(used_), used_, skipped_, beta, lambda};
}

GradientNoiseReport gradient_covariance_gamma(const ContrastiveConfig& config,
                                              std::span<const GammaStep> stream,
                                              GammaObjective objective) {
  GammaAccumulator acc;
  for (const auto& step : stream) {
    const MemoryView* mem = step.memory.empty() ? nullptr : &step.memory;
    const LossOutput out = objective == GammaObjective::contrastive
                               ? contrastive_loss(step.batch, mem, config.beta)
                               : combined_loss(step.batch, mem, config);
    acc.add(out.grad);
  }
  return acc.report(config.beta, config.lambda);
}

}  // namespace dml
