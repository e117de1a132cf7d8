#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace vfe::eval {

/// Gaussian summary of a feature set.
struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  std::int64_t count = 0;
};

/// Sample mean and unbiased (n - 1) covariance of the rows of `features` (n x d), computed in
/// two passes. Needs n >= 2.
GaussianStats gaussian_stats(const Eigen::MatrixXd& features);

/// Principal square root of a symmetric PSD matrix via eigendecomposition; negative
/// eigenvalues are clamped to zero. Throws InvalidInput when `a` is not symmetric to within
/// `symmetry_tol` relative to its largest entry.
Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& a, double symmetry_tol = 1e-8);

/// |mu1 - mu2|^2 + Tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2), with small negative trace terms from
/// rounding clamped to zero.
double frechet_distance(const GaussianStats& s1, const GaussianStats& s2);

}  // namespace vfe::eval
