#pragma once

#include "geomem/errors.hpp"
#include "geomem/point_cloud.hpp"

#include <Eigen/Dense>

#include <optional>
#include <utility>
#include <vector>

namespace geomem {

/// Least-squares similarity (or rigid, with_scale = false) mapping source onto
/// target: argmin Σ‖s·R·pᵢ + t − qᵢ‖². Closed form via SVD of the
/// cross-covariance with the determinant sign correction.
///
/// Throws DegenerateInputError for fewer than 3 pairs or a cross-covariance of
/// rank < 2 (collinear or coincident points).
template <typename DerivedA, typename DerivedB>
SimilarityTransform<typename DerivedA::Scalar> umeyama(const Eigen::MatrixBase<DerivedA>& source,
                                                       const Eigen::MatrixBase<DerivedB>& target,
                                                       bool with_scale = true) {
  using Scalar = typename DerivedA::Scalar;
  using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
  using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
  static_assert(std::is_same_v<Scalar, typename DerivedB::Scalar>, "umeyama: scalar types must match");

  if (source.rows() != 3 || target.rows() != 3 || source.cols() != target.cols()) {
    throw InputError("umeyama: expected two 3xN point sets of equal size");
  }
  const Eigen::Index n = source.cols();
  if (n < 3) throw DegenerateInputError("umeyama: need at least 3 correspondences");

  const Vector3 mean_src = source.rowwise().mean();
  const Vector3 mean_dst = target.rowwise().mean();
  const Eigen::Matrix<Scalar, 3, Eigen::Dynamic> src_c = source.colwise() - mean_src;
  const Eigen::Matrix<Scalar, 3, Eigen::Dynamic> dst_c = target.colwise() - mean_dst;

  const Matrix3 sigma = dst_c * src_c.transpose() / Scalar(n);
  Eigen::JacobiSVD<Matrix3> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector3 d = svd.singularValues();
  if (!(d(0) > Scalar(0)) || d(1) <= Scalar(1e-12) * d(0)) {
    throw DegenerateInputError("umeyama: correspondences are collinear or coincident (covariance rank < 2)");
  }

  Vector3 s = Vector3::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < Scalar(0)) s(2) = Scalar(-1);

  SimilarityTransform<Scalar> out;
  out.rotation = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
  if (with_scale) {
    const Scalar src_var = src_c.squaredNorm() / Scalar(n);
    out.scale = d.dot(s) / src_var;
  }
  out.translation = mean_dst - out.scale * (out.rotation * mean_src);
  return out;
}

/// sqrt(mean ‖T(pᵢ) − qᵢ‖²).
double alignment_rms(const Points3& source, const Points3& target, const Sim3d& transform);

struct IcpOptions {
  int max_iters = 50;
  double tol = 1e-10;
  /// Keep this fraction of the closest correspondences each pass; nullopt disables trimming.
  std::optional<double> keep_fraction = 0.9;
  bool with_scale = true;
};

struct IcpResult {
  Sim3d transform;
  /// RMS over kept correspondences at every correspondence pass; non-increasing.
  std::vector<double> residuals;
  int iterations = 0;
  bool converged = false;
};

/// Alternates pred→gt nearest-neighbor matching and a closed-form similarity
/// update. Stops when |Δresidual| < tol, the residual hits zero, or after max_iters.
IcpResult icp_scale_refine(const PointCloud& pred, const PointCloud& gt, const Sim3d& init,
                           const IcpOptions& options = {});

using IndexPairs = std::vector<std::pair<Eigen::Index, Eigen::Index>>;

/// Umeyama over explicitly matched (pred index, anchor index) pairs; maps pred into the anchor frame.
Sim3d align_by_anchor(const PointCloud& pred, const PointCloud& anchor, const IndexPairs& correspondences,
                      bool with_scale = true);

/// Nearest-neighbor fallback when no pixel correspondence is available.
Sim3d align_by_nearest_neighbors(const PointCloud& pred, const PointCloud& anchor, const Sim3d& init,
                                 const IcpOptions& options = {});

/// Pairs (i, j) such that pred_pixels[i] == anchor_pixels[j]; both lists must be sorted ascending.
IndexPairs match_pixel_indices(const std::vector<Eigen::Index>& pred_pixels,
                               const std::vector<Eigen::Index>& anchor_pixels);

}  // namespace geomem
