#pragma once

#include "dml/types.hpp"

namespace dml {

struct AdamWConfig {
  double lr = 3e-5;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias-corrected moments and decoupled weight decay:
//   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)
class AdamW {
 public:
  AdamW(Eigen::Index num_params, const AdamWConfig& config);

  void step(Vector& params, const Vector& grads);

  long steps() const { return step_; }
  const Vector& first_moment() const { return m_; }
  const Vector& second_moment() const { return v_; }
  const AdamWConfig& config() const { return config_; }

 private:
  AdamWConfig config_;
  Vector m_, v_;
  long step_ = 0;
};

}  // namespace dml
