#pragma once

#include <cmath>
#include <sstream>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "muse/errors.hpp"
#include "muse/numerics/random.hpp"

namespace muse {

inline bool all_finite(const Vec& v) { return v.allFinite(); }

/// Solve A X = B for square A by partially pivoted LU. Throws
/// SingularMatrixError when the smallest pivot falls below
/// 1e-12 * max|A|.
inline Mat solve_small_linear(const Mat& A, const Mat& B) {
  if (A.rows() != A.cols())
    throw Error("solve_small_linear: A must be square");
  if (A.rows() != B.rows())
    throw Error("solve_small_linear: dimension mismatch between A and B");

  Eigen::PartialPivLU<Mat> lu(A);
  const double scale = A.cwiseAbs().maxCoeff();
  double min_pivot = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    min_pivot = std::min(min_pivot, std::abs(lu.matrixLU()(i, i)));
  if (!(min_pivot > 1e-12 * scale)) {
    std::ostringstream msg;
    msg << "solve_small_linear: matrix is numerically singular "
        << "(pivot ratio " << (scale > 0 ? min_pivot / scale : 0.0)
        << ", dimension " << A.rows() << ")";
    throw SingularMatrixError(msg.str(), scale > 0 ? min_pivot / scale : 0.0);
  }
  return lu.solve(B);
}

/// Mean and unbiased (N-1 denominator) covariance of the rows.
inline std::pair<Vec, Mat> sample_mean_and_covariance(
    const std::vector<Vec>& rows) {
  if (rows.size() < 2)
    throw Error("sample_mean_and_covariance: need at least 2 rows");
  const Eigen::Index d = rows.front().size();
  for (const Vec& r : rows)
    if (r.size() != d)
      throw Error("sample_mean_and_covariance: rows have unequal length");

  Vec mean = Vec::Zero(d);
  for (const Vec& r : rows) mean += r;
  mean /= static_cast<double>(rows.size());

  Mat cov = Mat::Zero(d, d);
  for (const Vec& r : rows) {
    Vec c = r - mean;
    cov.noalias() += c * c.transpose();
  }
  cov /= static_cast<double>(rows.size() - 1);
  return {std::move(mean), std::move(cov)};
}

}  // namespace muse
