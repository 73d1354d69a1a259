#include "dml/head.hpp"

#include "dml/error.hpp"

#include <cmath>
#include <string>

namespace dml {

EncoderHead::EncoderHead(const HeadSpec& spec) : spec_(spec) {
  if (spec.in_dim < 1 || spec.out_dim < 1 || spec.hidden < 0)
    throw ConfigError("head: dimensions must be positive");
  if (spec.hidden == 0) {
    w1 = Matrix::Zero(spec.out_dim, spec.in_dim);
    b1 = Vector::Zero(spec.out_dim);
  } else {
    w1 = Matrix::Zero(spec.hidden, spec.in_dim);
    b1 = Vector::Zero(spec.hidden);
    w2 = Matrix::Zero(spec.out_dim, spec.hidden);
    b2 = Vector::Zero(spec.out_dim);
  }
}

EncoderHead EncoderHead::random(const HeadSpec& spec, std::mt19937_64& rng) {
  EncoderHead head(spec);
  auto fill = [&rng](Matrix& w) {
    const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = u(rng);
  };
  fill(head.w1);
  if (spec.hidden > 0) fill(head.w2);
  return head;
}

EncoderHead EncoderHead::identity(Eigen::Index dim) {
  EncoderHead head(HeadSpec{dim, 0, dim});
  head.w1.setIdentity();
  return head;
}

Eigen::Index EncoderHead::num_params() const {
  return w1.size() + b1.size() + w2.size() + b2.size();
}

Vector EncoderHead::flatten() const {
  Vector flat(num_params());
  Eigen::Index at = 0;
  auto put = [&](const double* data, Eigen::Index n) {
    for (Eigen::Index k = 0; k < n; ++k) flat[at++] = data[k];
  };
  put(w1.data(), w1.size());
  put(b1.data(), b1.size());
  put(w2.data(), w2.size());
  put(b2.data(), b2.size());
  return flat;
}

void EncoderHead::assign(const Vector& flat) {
  if (flat.size() != num_params())
    throw ShapeError("head: parameter vector has " + std::to_string(flat.size()) +
                     " entries, expected " + std::to_string(num_params()));
  Eigen::Index at = 0;
  auto take = [&](double* data, Eigen::Index n) {
    for (Eigen::Index k = 0; k < n; ++k) data[k] = flat[at++];
  };
  take(w1.data(), w1.size());
  take(b1.data(), b1.size());
  take(w2.data(), w2.size());
  take(b2.data(), b2.size());
}

EncoderHead::Cache EncoderHead::forward(const Matrix& x) const {
  if (x.cols() != spec_.in_dim)
    throw ShapeError("head: input dimension " + std::to_string(x.cols()) +
                     " does not match head input " + std::to_string(spec_.in_dim));
  if (!x.allFinite()) throw NumericalError("head: non-finite input features");
  Cache c;
  c.input = x;
  Matrix first = x * w1.transpose();
  first.rowwise() += b1.transpose();
  if (spec_.hidden == 0) {
    c.embeddings = std::move(first);
  } else {
    c.hidden_act = first.array().tanh().matrix();
    c.embeddings = c.hidden_act * w2.transpose();
    c.embeddings.rowwise() += b2.transpose();
  }
  c.normalized = c.embeddings;
  for (Eigen::Index i = 0; i < c.normalized.rows(); ++i) {
    const double norm = c.normalized.row(i).norm();
    if (!(norm > 0.0) || !std::isfinite(norm))
      throw NormalizationError("head: embedding of sample " + std::to_string(i) +
                               " has zero or non-finite norm");
    c.normalized.row(i) /= norm;
  }
  return c;
}

Matrix EncoderHead::embed(const Matrix& x) const { return forward(x).normalized; }

Vector EncoderHead::backward(const Cache& cache, const Matrix& grad_embeddings) const {
  if (grad_embeddings.rows() != cache.embeddings.rows() ||
      grad_embeddings.cols() != cache.embeddings.cols())
    throw ShapeError("head: gradient shape does not match cached embeddings");
  Vector flat(num_params());
  Eigen::Index at = 0;
  auto put = [&](const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) flat[at++] = m(i, j);
  };
  auto put_vec = [&](const Vector& v) {
    for (Eigen::Index k = 0; k < v.size(); ++k) flat[at++] = v[k];
  };
  if (spec_.hidden == 0) {
    put(Matrix(grad_embeddings.transpose() * cache.input));
    put_vec(grad_embeddings.colwise().sum().transpose());
    return flat;
  }
  const Matrix grad_w2 = grad_embeddings.transpose() * cache.hidden_act;
  const Vector grad_b2 = grad_embeddings.colwise().sum().transpose();
  Matrix grad_hidden = grad_embeddings * w2;
  grad_hidden.array() *= 1.0 - cache.hidden_act.array().square();
  put(Matrix(grad_hidden.transpose() * cache.input));
  put_vec(grad_hidden.colwise().sum().transpose());
  put(grad_w2);
  put_vec(grad_b2);
  return flat;
}

bool EncoderHead::operator==(const EncoderHead& other) const {
  return spec_.in_dim == other.spec_.in_dim && spec_.hidden == other.spec_.hidden &&
         spec_.out_dim == other.spec_.out_dim && w1 == other.w1 && b1 == other.b1 &&
         w2 == other.w2 && b2 == other.b2;
}

}  // namespace dml
