#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace vfe::eval {

/// Multinomial logistic regression on frozen features.
struct ProbeModel {
  Eigen::MatrixXd weights;  // num_classes x feature_dim
  Eigen::VectorXd bias;     // num_classes
  double l2 = 0.0;
  int iterations = 0;
  double final_loss = 0.0;
  double final_grad_norm = 0.0;

  int num_classes() const { return static_cast<int>(weights.rows()); }
  int feature_dim() const { return static_cast<int>(weights.cols()); }
};

struct ProbeOptions {
  double l2 = 1e-3;
  int max_iter = 1500;
  double tol = 1e-6;
  /// Random normal initial weights from this seed; zeros when absent.
  std::optional<std::uint64_t> init_seed;
};

/// Mean cross-entropy + (l2 / 2) |W|^2 (bias unpenalized) and its gradient.
struct ProbeObjective {
  double loss = 0.0;
  Eigen::MatrixXd grad_weights;
  Eigen::VectorXd grad_bias;
};

ProbeObjective probe_objective(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                               const Eigen::MatrixXd& features, const std::vector<int>& labels,
                               double l2);

/// Full-batch gradient descent with Armijo backtracking (Barzilai-Borwein trial steps). Stops
/// when the gradient norm drops below tol or after max_iter iterations. The class count is
/// max(label) + 1; throws InvalidInput for fewer than two distinct labels or n < classes.
ProbeModel train_probe(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                       const ProbeOptions& options = {});

/// Class scores (n x num_classes).
Eigen::MatrixXd probe_logits(const ProbeModel& model, const Eigen::MatrixXd& features);
std::vector<int> probe_predict(const ProbeModel& model, const Eigen::MatrixXd& features);

/// Per-column standardization fitted on one feature set and applied to others.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& features);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& features) const;
};

}  // namespace vfe::eval
