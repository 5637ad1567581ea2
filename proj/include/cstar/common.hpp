// Shared scalar types, tolerances and error taxonomy for the cstar library.
#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace cstar {

using cd = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;

/// Default relative tolerance: thresholds are scaled by the largest
/// singular value (or eigenvalue magnitude) of the operands involved.
inline constexpr double kDefaultTol = 1e-9;

/// Library error with a stable machine-readable kind slug, e.g.
/// "invalid-argument", "incompatible-operands", "not-a-homomorphism",
/// "not-a-morphism", "not-positive-semidefinite", "not-completely-positive",
/// "ideal-not-respected", "precondition-violated", "not-bihilbertian",
/// "index-not-invertible", "not-a-cover", "inconsistent-subproduct",
/// "equality-undecidable-by-expansion", "parse-error", "usage-error",
/// "io-error".
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(kind + ": " + message), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

inline void require(bool cond, const std::string& kind, const std::string& message) {
  if (!cond) throw Error(kind, message);
}

/// Largest singular value; 0 for empty matrices.
inline double operator_norm(const Mat& m) {
  if (m.rows() == 0 || m.cols() == 0) return 0.0;
  // sqrt of the top eigenvalue of m* m (cheaper than a full SVD)
  Mat g = m.cols() <= m.rows() ? Mat(m.adjoint() * m) : Mat(m * m.adjoint());
  Eigen::SelfAdjointEigenSolver<Mat> es(g, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, es.eigenvalues()(g.rows() - 1)));
}

inline Mat adjoint(const Mat& m) { return m.adjoint(); }

/// Hermitian part (m + m*)/2.
inline Mat hermitize(const Mat& m) { return 0.5 * (m + Mat(m.adjoint())); }

inline bool approx_zero(double value, double scale, double tol) {
  return value <= tol * std::max(1.0, scale);
}

/// Rank with a relative singular-value threshold.
inline int numeric_rank(const Mat& m, double tol = 1e-9) {
  if (m.rows() == 0 || m.cols() == 0) return 0;
  Mat g = m.cols() <= m.rows() ? Mat(m.adjoint() * m) : Mat(m * m.adjoint());
  Eigen::SelfAdjointEigenSolver<Mat> es(g, Eigen::EigenvaluesOnly);
  double top = std::sqrt(std::max(0.0, es.eigenvalues()(g.rows() - 1)));
  // Singular values come from eigenvalues of m*m, whose zeros carry noise of
  // order eps * |m|^2; after the square root that floor is sqrt(eps) * |m|.
  double cut = std::max(tol, 5e-8) * std::max(1.0, top);
  int r = 0;
  for (int i = 0; i < es.eigenvalues().size(); ++i) {
    double sv = std::sqrt(std::max(0.0, es.eigenvalues()(i)));
    if (sv > cut) ++r;
  }
  return r;
}

}  // namespace cstar
