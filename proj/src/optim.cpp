#include "dml/optim.hpp"

#include "dml/error.hpp"

#include <cmath>

namespace dml {

AdamW::AdamW(Eigen::Index num_params, const AdamWConfig& config)
    : config_(config), m_(Vector::Zero(num_params)), v_(Vector::Zero(num_params)) {
  if (!(config.lr > 0.0)) throw ConfigError("AdamW: learning rate must be positive");
  if (!(config.weight_decay >= 0.0)) throw ConfigError("AdamW: weight decay must be >= 0");
  if (!(config.beta1 >= 0.0 && config.beta1 < 1.0) ||
      !(config.beta2 >= 0.0 && config.beta2 < 1.0) || !(config.eps > 0.0))
    throw ConfigError("AdamW: invalid moment constants");
}

void AdamW::step(Vector& params, const Vector& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw ShapeError("AdamW: parameter/gradient size mismatch");
  if (!grads.allFinite()) throw NumericalError("AdamW: non-finite gradient");
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (Eigen::Index k = 0; k < params.size(); ++k) {
    const double g = grads[k];
    m_[k] = config_.beta1 * m_[k] + (1.0 - config_.beta1) * g;
    v_[k] = config_.beta2 * v_[k] + (1.0 - config_.beta2) * g * g;
    const double m_hat = m_[k] / c1;
    const double v_hat = v_[k] / c2;
    params[k] -= config_.lr * (m_hat / (std::sqrt(v_hat) + config_.eps) +
                               config_.weight_decay * params[k]);
  }
}

}  // namespace dml
