#pragma once

#include "dml/data.hpp"
#include "dml/diagnostics.hpp"
#include "dml/head.hpp"
#include "dml/objective.hpp"
#include "dml/optim.hpp"

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace dml {

enum class TrainMode { category, particular };
TrainMode parse_train_mode(std::string_view name);
std::string_view to_string(TrainMode mode);

struct TupleSchedule {
  std::size_t tuples_per_batch = 5;
  std::size_t negatives_per_tuple = 5;
  std::size_t pairs_per_epoch = 2000;
  std::size_t negative_pool = 22000;
  double scale = 1.0;  // multiplies pairs_per_epoch and negative_pool

  std::size_t scaled_pairs() const;
  std::size_t scaled_pool() const;
};

struct TrainConfig {
  TrainMode mode = TrainMode::category;
  ContrastiveConfig loss;
  AdamWConfig optimizer;
  Eigen::Index batch_size = 64;
  Eigen::Index instances_per_class = 4;
  double memory_capacity_ratio = 1.0;
  std::optional<double> momentum;  // memory entries from an EMA encoder when set
  long iterations = 0;
  std::uint64_t seed = 0;
  Eigen::Index hidden = 0;
  Eigen::Index out_dim = 64;
  TupleSchedule tuples;
  long gamma_every = 0;  // 0 disables gradient-noise measurement
  GammaObjective gamma_objective = GammaObjective::contrastive;
  long snapshot_every = 0;  // 0 disables energy snapshots
};

struct TraceRow {
  long step = 0;
  double loss = 0.0;
  double positive = 0.0;
  double negative = 0.0;
  double koleo = 0.0;
};

struct EnergySnapshot {
  long step = 0;
  Eigen::Index components_50 = 0;
  Eigen::Index components_90 = 0;
  Eigen::Index components_95 = 0;
};

struct TrainResult {
  EncoderHead head;
  EncoderHead initial_head;
  std::vector<TraceRow> trace;
  std::vector<EnergySnapshot> snapshots;
  std::optional<GradientNoiseReport> gamma;
  std::size_t memory_capacity = 0;
};

// Observer hook for tests; called once per step after the loss is computed.
struct StepObserver {
  virtual ~StepObserver() = default;
  virtual void on_step(long step, const LabeledEmbeddingBatch& batch, const MemoryView& memory,
                       const LossOutput& loss) = 0;
  virtual void on_enqueue(long step, const Matrix& features, const Matrix& entries) {
    (void)step;
    (void)features;
    (void)entries;
  }
};

void validate_train_config(const TrainConfig& config);

// Runs the configured number of optimizer steps on `train`. Throws
// TrainingAborted (with the step index) on degenerate batches or a
// non-finite loss.
TrainResult train_run(const TrainConfig& config, const LabeledFeatureDataset& train,
                      StepObserver* observer = nullptr);

// Same, starting from a given head instead of a seeded random one.
TrainResult train_run(const TrainConfig& config, const LabeledFeatureDataset& train,
                      EncoderHead initial, StepObserver* observer = nullptr);

}  // namespace dml
