#include "dml/trainer.hpp"

#include "dml/error.hpp"
#include "dml/memory.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <unordered_set>
#include <string>

namespace dml {

TrainMode parse_train_mode(std::string_view name) {
  if (name == "category") return TrainMode::category;
  if (name == "particular") return TrainMode::particular;
  throw ConfigError("unknown mode '" + std::string(name) + "'");
}

std::string_view to_string(TrainMode mode) {
  return mode == TrainMode::category ? "category" : "particular";
}

std::size_t TupleSchedule::scaled_pairs() const {
  return std::max<std::size_t>(1, static_cast<std::size_t>(
                                      std::llround(scale * static_cast<double>(pairs_per_epoch))));
}

std::size_t TupleSchedule::scaled_pool() const {
  return std::max<std::size_t>(1, static_cast<std::size_t>(
                                      std::llround(scale * static_cast<double>(negative_pool))));
}

void validate_train_config(const TrainConfig& c) {
  validate_contrastive_config(c.loss);
  if (c.iterations < 0) throw ConfigError("iterations must be >= 0");
  if (c.out_dim < 2) throw ConfigError("head out_dim must be >= 2");
  if (c.hidden < 0) throw ConfigError("head hidden width must be >= 0");
  if (c.mode == TrainMode::category &&
      (c.instances_per_class < 1 || c.batch_size < 2 || c.batch_size % c.instances_per_class != 0))
    throw ConfigError("batch_size must be a multiple of instances_per_class");
  if (!(c.memory_capacity_ratio >= 0.0)) throw ConfigError("memory_capacity_ratio must be >= 0");
  if (c.momentum && !(*c.momentum >= 0.0 && *c.momentum < 1.0))
    throw ConfigError("momentum_m must lie in [0, 1)");
  if (c.gamma_every < 0 || c.snapshot_every < 0)
    throw ConfigError("measurement intervals must be >= 0");
  if (c.mode == TrainMode::particular &&
      (c.tuples.tuples_per_batch < 1 || c.tuples.negatives_per_tuple < 1 || !(c.tuples.scale > 0.0)))
    throw ConfigError("tuple schedule must be positive");
  if (c.mode == TrainMode::particular && c.tuples.scaled_pairs() < c.tuples.tuples_per_batch)
    throw ConfigError("pairs per epoch must cover at least one batch of tuples");
}

namespace {

// Produces the feature batch for each step. Category mode draws
// class-balanced batches; particular mode walks an epoch of mined tuples.
class BatchSource {
 public:
  BatchSource(const TrainConfig& config, const LabeledFeatureDataset& data)
      : config_(config), data_(data), rng_(config.seed) {}

  LabeledFeatureBatch next(const EncoderHead& head) {
    if (config_.mode == TrainMode::category)
      return sample_category_batch(data_, config_.batch_size, config_.instances_per_class, rng_);
    return next_tuples(head);
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  LabeledFeatureBatch next_tuples(const EncoderHead& head) {
    const std::size_t per_batch = config_.tuples.tuples_per_batch;
    if (tuples_.empty() || cursor_ + per_batch > tuples_.size()) start_epoch(head);
    // An item may recur across tuples (a popular hard negative); it enters
    // the batch once, since coincident rows have no KoLeo neighbour distance.
    LabeledFeatureBatch batch;
    std::unordered_set<std::size_t> seen;
    const auto add = [&](std::size_t i) {
      if (seen.insert(i).second) batch.indices.push_back(i);
    };
    for (std::size_t t = 0; t < per_batch; ++t) {
      const TupleSample& s = tuples_[cursor_++];
      add(s.anchor);
      add(s.positive);
      for (auto n : s.negatives) add(n);
    }
    for (auto i : batch.indices) batch.labels.push_back(data_.labels[i]);
    batch.features = data_.rows(batch.indices);
    return batch;
  }

  // Candidate descriptors are computed once per epoch with the current head.
  void start_epoch(const EncoderHead& head) {
    const auto& sched = config_.tuples;
    const TupleEpochPlan plan =
        plan_tuple_epoch(data_, sched.scaled_pairs(), sched.scaled_pool(), rng_);
    const Matrix pool = head.embed(data_.rows(plan.pool));
    Labels pool_labels;
    for (auto i : plan.pool) pool_labels.push_back(data_.labels[i]);
    std::vector<std::size_t> anchors;
    for (const auto& [a, p] : plan.pairs) anchors.push_back(a);
    const Matrix anchor_desc = head.embed(data_.rows(anchors));

    tuples_.clear();
    for (std::size_t t = 0; t < plan.pairs.size(); ++t) {
      TupleSample s;
      s.anchor = plan.pairs[t].first;
      s.positive = plan.pairs[t].second;
      const auto picked =
          mine_hard_negatives(anchor_desc.row(static_cast<Eigen::Index>(t)).transpose(), pool,
                              pool_labels, data_.labels[s.anchor], sched.negatives_per_tuple);
      for (auto p : picked) s.negatives.push_back(plan.pool[p]);
      tuples_.push_back(std::move(s));
    }
    cursor_ = 0;
  }

  const TrainConfig& config_;
  const LabeledFeatureDataset& data_;
  std::mt19937_64 rng_;
  std::vector<TupleSample> tuples_;
  std::size_t cursor_ = 0;
};

Matrix energy_probe(const LabeledFeatureDataset& data) {
  const Eigen::Index n = std::min<Eigen::Index>(data.size(), 1024);
  return data.features.topRows(n);
}

}  // namespace

TrainResult train_run(const TrainConfig& config, const LabeledFeatureDataset& train,
                      StepObserver* observer) {
  validate_train_config(config);
  std::mt19937_64 init_rng(config.seed ^ 0x5851f42d4c957f2dULL);
  EncoderHead head =
      EncoderHead::random(HeadSpec{train.dim(), config.hidden, config.out_dim}, init_rng);
  return train_run(config, train, std::move(head), observer);
}

TrainResult train_run(const TrainConfig& config, const LabeledFeatureDataset& train,
                      EncoderHead initial, StepObserver* observer) {
  validate_train_config(config);
  if (initial.spec().in_dim != train.dim())
    throw ShapeError("train: head input dimension does not match features");

  TrainResult result;
  result.initial_head = initial;
  EncoderHead head = std::move(initial);
  const Eigen::Index d = head.spec().out_dim;

  result.memory_capacity = MemoryBank::capacity_from_ratio(
      config.memory_capacity_ratio, static_cast<std::size_t>(train.size()));
  MemoryBank bank(result.memory_capacity, d);
  std::unique_ptr<MomentumTrack> track;
  EncoderHead shadow_head;
  if (config.momentum) {
    track = std::make_unique<MomentumTrack>(head.flatten(), *config.momentum);
    shadow_head = head;
  }

  AdamW optimizer(head.num_params(), config.optimizer);
  BatchSource source(config, train);
  GammaAccumulator gamma;
  const Matrix probe = config.snapshot_every > 0 ? energy_probe(train) : Matrix();

  for (long step = 0; step < config.iterations; ++step) {
    const LabeledFeatureBatch fb = source.next(head);
    EncoderHead::Cache cache;
    try {
      cache = head.forward(fb.features);
    } catch (const NormalizationError& e) {
      throw TrainingAborted(std::string("forward failed: ") + e.what(), step);
    }
    LabeledEmbeddingBatch batch{cache.normalized, fb.labels};
    const MemoryView memory = bank.view();
    const MemoryView* mem = memory.empty() ? nullptr : &memory;

    LossOutput loss;
    try {
      loss = combined_loss(batch, mem, config.loss);
    } catch (const DegenerateBatchError& e) {
      throw TrainingAborted(std::string("degenerate batch: ") + e.what(), step);
    }
    if (!std::isfinite(loss.value) || !loss.grad.allFinite())
      throw TrainingAborted("non-finite loss", step);
    if (observer) observer->on_step(step, batch, memory, loss);

    if (config.gamma_every > 0 && step % config.gamma_every == 0) {
      if (config.gamma_objective == GammaObjective::contrastive && config.loss.lambda != 0.0)
        gamma.add(contrastive_loss(batch, mem, config.loss.beta).grad);
      else
        gamma.add(loss.grad);
    }

    result.trace.push_back(
        {step, loss.value, loss.terms.positive, loss.terms.negative, loss.terms.koleo});

    const Matrix grad_e = backprop_through_normalization(cache.embeddings, loss.grad);
    const Vector grad_params = head.backward(cache, grad_e);

    // Memory entries come from the encoder state this step was evaluated
    // with (or its moving average), before the optimizer moves it.
    Matrix entries;
    if (track) {
      track->update(head.flatten());
      shadow_head.assign(track->shadow());
      entries = shadow_head.embed(fb.features);
    } else {
      entries = batch.z;
    }
    if (observer) observer->on_enqueue(step, fb.features, entries);
    bank.enqueue(entries, fb.labels);

    Vector params = head.flatten();
    try {
      optimizer.step(params, grad_params);
    } catch (const NumericalError& e) {
      throw TrainingAborted(e.what(), step);
    }
    head.assign(params);

    if (config.snapshot_every > 0 && (step + 1) % config.snapshot_every == 0) {
      const auto rep = pca_energy_report(head.embed(probe));
      result.snapshots.push_back(
          {step + 1, rep.components_50, rep.components_90, rep.components_95});
    }
  }

  if (config.gamma_every > 0 && gamma.measured() > 0)
    result.gamma = gamma.report(config.loss.beta, config.loss.lambda);
  result.head = std::move(head);
  return result;
}

}  // namespace dml
