#include "vfe/eval/frechet.hpp"

#include <algorithm>
#include <string>

#include "vfe/errors.hpp"

namespace vfe::eval {

GaussianStats gaussian_stats(const Eigen::MatrixXd& features) {
  const auto n = features.rows();
  if (n < 2) throw InvalidInput("gaussian_stats needs at least 2 samples, got " + std::to_string(n));
  GaussianStats s;
  s.count = n;
  s.mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - s.mean.transpose();
  s.covariance = (centered.transpose() * centered) / static_cast<double>(n - 1);
  // The product is symmetric up to rounding; make it exactly so.
  s.covariance = 0.5 * (s.covariance + s.covariance.transpose()).eval();
  return s;
}

Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& a, double symmetry_tol) {
  if (a.rows() != a.cols()) throw InvalidInput("sqrtm_psd needs a square matrix");
  if (a.size() == 0) return a;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > symmetry_tol * scale) {
    throw InvalidInput("sqrtm_psd: matrix is not symmetric");
  }
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) throw InvalidInput("sqrtm_psd: eigendecomposition failed");
  const Eigen::VectorXd roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd& v = eig.eigenvectors();
  Eigen::MatrixXd out = v * roots.asDiagonal() * v.transpose();
  return 0.5 * (out + out.transpose());
}

double frechet_distance(const GaussianStats& s1, const GaussianStats& s2) {
  if (s1.mean.size() != s2.mean.size() || s1.covariance.rows() != s2.covariance.rows()) {
    throw InvalidInput("frechet_distance: dimension mismatch");
  }
  const double mean_term = (s1.mean - s2.mean).squaredNorm();
  const Eigen::MatrixXd root1 = sqrtm_psd(s1.covariance);
  Eigen::MatrixXd inner = root1 * s2.covariance * root1;
  inner = 0.5 * (inner + inner.transpose()).eval();
  const double trace_term =
      s1.covariance.trace() + s2.covariance.trace() - 2.0 * sqrtm_psd(inner).trace();
  return mean_term + std::max(0.0, trace_term);
}

}  // namespace vfe::eval
