#include "vfe/eval/probe.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>

#include "vfe/errors.hpp"

namespace vfe::eval {

namespace {

void check_inputs(const Eigen::MatrixXd& features, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw InvalidInput("probe: feature rows and labels differ in length");
  }
  for (int y : labels)
    if (y < 0) throw InvalidInput("probe: negative label");
}

}  // namespace

ProbeObjective probe_objective(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                               const Eigen::MatrixXd& features, const std::vector<int>& labels,
                               double l2) {
  check_inputs(features, labels);
  const auto n = features.rows();
  const auto k = weights.rows();
  Eigen::MatrixXd scores = features * weights.transpose();
  scores.rowwise() += bias.transpose();

  ProbeObjective out;
  double nll = 0.0;
  Eigen::MatrixXd residual(n, k);  // softmax - onehot
  for (Eigen::Index i = 0; i < n; ++i) {
    const double top = scores.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (scores.row(i).array() - top).exp().matrix();
    const double z = e.sum();
    const int y = labels[i];
    if (y >= k) throw InvalidInput("probe: label " + std::to_string(y) + " exceeds class count");
    nll += std::log(z) + top - scores(i, y);
    residual.row(i) = e / z;
    residual(i, y) -= 1.0;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  out.loss = nll * inv_n + 0.5 * l2 * weights.squaredNorm();
  out.grad_weights = residual.transpose() * features * inv_n + l2 * weights;
  out.grad_bias = residual.colwise().sum().transpose() * inv_n;
  return out;
}

ProbeModel train_probe(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                       const ProbeOptions& options) {
  check_inputs(features, labels);
  const std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) throw InvalidInput("probe: labels must cover at least two classes");
  const int k = *distinct.rbegin() + 1;
  if (features.rows() < k) throw InvalidInput("probe: fewer samples than classes");
  if (!(options.l2 >= 0.0) || options.max_iter < 0 || !(options.tol > 0.0)) {
    throw InvalidInput("probe: invalid optimizer options");
  }

  const auto d = features.cols();
  ProbeModel m;
  m.l2 = options.l2;
  m.weights = Eigen::MatrixXd::Zero(k, d);
  m.bias = Eigen::VectorXd::Zero(k);
  if (options.init_seed) {
    std::mt19937_64 rng(*options.init_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < m.weights.size(); ++i) m.weights.data()[i] = normal(rng);
    for (Eigen::Index i = 0; i < m.bias.size(); ++i) m.bias[i] = normal(rng);
  }

  auto obj = probe_objective(m.weights, m.bias, features, labels, options.l2);
  auto grad_norm = [](const ProbeObjective& o) {
    return std::sqrt(o.grad_weights.squaredNorm() + o.grad_bias.squaredNorm());
  };

  double step = 1.0;
  Eigen::MatrixXd prev_w;
  Eigen::VectorXd prev_b;
  ProbeObjective prev;
  int it = 0;
  for (; it < options.max_iter; ++it) {
    const double gn = grad_norm(obj);
    if (gn < options.tol) break;
    if (it > 0) {
      // Barzilai-Borwein step from the last displacement, as the first trial step.
      const double sy = (m.weights - prev_w).cwiseProduct(obj.grad_weights - prev.grad_weights).sum() +
                        (m.bias - prev_b).dot(obj.grad_bias - prev.grad_bias);
      const double ss = (m.weights - prev_w).squaredNorm() + (m.bias - prev_b).squaredNorm();
      if (sy > 0.0 && std::isfinite(ss / sy)) step = std::min(ss / sy, 1e6);
    }
    prev_w = m.weights;
    prev_b = m.bias;
    prev = obj;

    constexpr double kArmijo = 1e-4;
    ProbeObjective trial;
    Eigen::MatrixXd w;
    Eigen::VectorXd b;
    for (int backtrack = 0; backtrack < 60; ++backtrack) {
      w = prev_w - step * prev.grad_weights;
      b = prev_b - step * prev.grad_bias;
      trial = probe_objective(w, b, features, labels, options.l2);
      if (std::isfinite(trial.loss) && trial.loss <= prev.loss - kArmijo * step * gn * gn) break;
      step *= 0.5;
    }
    if (!(trial.loss <= prev.loss)) break;  // no descent possible at machine precision
    m.weights = std::move(w);
    m.bias = std::move(b);
    obj = std::move(trial);
  }
  m.iterations = it;
  m.final_loss = obj.loss;
  m.final_grad_norm = grad_norm(obj);
  return m;
}

Eigen::MatrixXd probe_logits(const ProbeModel& model, const Eigen::MatrixXd& features) {
  if (features.cols() != model.feature_dim()) {
    throw InvalidInput("probe: feature dimension " + std::to_string(features.cols()) +
                       " does not match the model's " + std::to_string(model.feature_dim()));
  }
  Eigen::MatrixXd scores = features * model.weights.transpose();
  scores.rowwise() += model.bias.transpose();
  return scores;
}

std::vector<int> probe_predict(const ProbeModel& model, const Eigen::MatrixXd& features) {
  const auto scores = probe_logits(model, features);
  std::vector<int> out(scores.rows());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    scores.row(i).maxCoeff(&best);
    out[i] = static_cast<int>(best);
  }
  return out;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& features) {
  Standardizer s;
  s.mean = features.colwise().mean();
  const Eigen::MatrixXd centered = features.rowwise() - s.mean;
  const double denom = std::max<double>(1.0, static_cast<double>(features.rows()));
  s.scale = (centered.array().square().colwise().sum() / denom).sqrt().matrix();
  for (Eigen::Index j = 0; j < s.scale.size(); ++j)
    if (!(s.scale[j] > 1e-12)) s.scale[j] = 1.0;
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& features) const {
  return (features.rowwise() - mean).array().rowwise() / scale.array();
}

}  // namespace vfe::eval
