#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "geometry.hpp"

namespace rabbit {

// One paired reading: optical-flow features from the tactile sensor and the
// reference force from a calibrated F/T sensor.
struct CalibrationSample {
  Eigen::VectorXd features;
  Vec3 force = Vec3::Zero();
};

// force = A * features + b
struct DigitCalibration {
  Eigen::MatrixXd A;  // 3 x k
  Vec3 b = Vec3::Zero();
  double residual_rms = 0.0;

  Vec3 apply(const Eigen::VectorXd& features) const { return A * features + b; }
  int feature_count() const { return static_cast<int>(A.cols()); }
};

inline constexpr double kCalibrationRidge = 1e-9;

/// Ordinary least squares per force axis via ridge-stabilized normal equations.
inline DigitCalibration fit_digit_calibration(const std::vector<CalibrationSample>& samples) {
  if (samples.empty()) throw CalibrationError("no calibration samples");
  const Eigen::Index k = samples.front().features.size();
  if (k < 3) throw CalibrationError("at least 3 flow features are required");
  const auto n = static_cast<Eigen::Index>(samples.size());
  if (n < k + 1)
    throw CalibrationError("rank deficient: " + std::to_string(n) + " samples for " + std::to_string(k) +
                           " features plus bias");

  Eigen::MatrixXd X(n, k + 1);
  Eigen::MatrixXd Y(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = samples[static_cast<std::size_t>(i)];
    if (s.features.size() != k) throw CalibrationError("inconsistent feature count");
    X.row(i).head(k) = s.features.transpose();
    X(i, k) = 1.0;
    Y.row(i) = s.force.transpose();
  }

  const Eigen::MatrixXd gram = X.transpose() * X;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const double lmax = eig.eigenvalues().maxCoeff();
  const double lmin = eig.eigenvalues().minCoeff();
  if (!(lmax > 0.0) || lmin <= 1e-12 * lmax) throw CalibrationError("rank deficient feature matrix");

  const Eigen::MatrixXd normal = gram + kCalibrationRidge * Eigen::MatrixXd::Identity(k + 1, k + 1);
  const Eigen::MatrixXd coef = normal.ldlt().solve(X.transpose() * Y);  // (k+1) x 3

  DigitCalibration cal;
  cal.A = coef.topRows(k).transpose();
  cal.b = coef.row(k).transpose();
  const Eigen::MatrixXd resid = Y - X * coef;
  cal.residual_rms = std::sqrt(resid.squaredNorm() / static_cast<double>(resid.size()));
  if (!std::isfinite(cal.residual_rms)) throw CalibrationError("non-finite residual");
  return cal;
}

}  // namespace rabbit
