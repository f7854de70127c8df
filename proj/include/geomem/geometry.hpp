#pragma once

#include "geomem/point_cloud.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

namespace geomem {

// Conventions used everywhere in the library:
//  - pixel (u, v) has homogeneous coordinate (u + 0.5, v + 0.5, 1), i.e. pixel centers;
//  - camera frame is right-handed, x right, y down, +z forward (viewing direction);
//  - poses are camera-to-world.
inline constexpr double kPixelCenterOffset = 0.5;

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  Mat3 matrix() const;
  Mat3 inverse_matrix() const;

  /// Throws InputError unless fx, fy > 0 and 0 <= cx < width, 0 <= cy < height.
  void validate() const;

  /// Pinhole intrinsics with the principal point at the image center.
  static Intrinsics from_fov(double fov_h_deg, double fov_v_deg, int width, int height);
};

struct CameraPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  const Vec3& center() const { return translation; }
  Vec3 forward() const { return rotation.col(2); }

  CameraPose inverse() const;
  Vec3 to_world(const Vec3& p_cam) const { return rotation * p_cam + translation; }
  Vec3 to_camera(const Vec3& p_world) const { return rotation.transpose() * (p_world - translation); }

  /// Throws InputError unless rotation is orthonormal with det +1 within tol.
  void validate(double tol = 1e-9) const;

  /// Camera at eye looking at target; the image y axis is kept as close as
  /// possible to down_hint.
  static CameraPose look_at(const Vec3& eye, const Vec3& target, const Vec3& down_hint);
};

/// (a * b) maps b's local frame through a.
CameraPose operator*(const CameraPose& a, const CameraPose& b);

/// Apply a similarity to a camera-to-world pose (the rotation part only rotates).
CameraPose transform_pose(const Sim3d& t, const CameraPose& pose);

struct CameraView {
  Intrinsics intrinsics;
  CameraPose pose;
  int frame_id = 0;

  void validate() const;
};

using DepthGrid = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MaskGrid = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// z-depth per pixel (H×W) with an explicit validity mask.
struct DepthMap {
  DepthGrid values;
  MaskGrid valid;

  DepthMap() = default;
  /// Non-finite or non-positive entries are masked out, never clamped.
  explicit DepthMap(DepthGrid depth);

  int width() const { return static_cast<int>(values.cols()); }
  int height() const { return static_cast<int>(values.rows()); }
  Eigen::Index valid_count() const { return valid.count(); }
  void invalidate(int v, int u) { valid(v, u) = false; }
};

/// 3-channel float image, pixel (u, v) stored at row v * width + u, values in [0,1].
struct RgbImage {
  int width = 0;
  int height = 0;
  Eigen::Matrix<float, Eigen::Dynamic, 3, Eigen::RowMajor> pixels;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), pixels(Eigen::Index(w) * h, 3) { pixels.setZero(); }

  Eigen::Vector3f at(int u, int v) const { return pixels.row(Eigen::Index(v) * width + u).transpose(); }
  void set(int u, int v, const Eigen::Vector3f& c) { pixels.row(Eigen::Index(v) * width + u) = c.transpose(); }
};

struct PluckerRay {
  Vec3 direction;
  Vec3 moment;
};

struct PixelProjection {
  double u;      // continuous pixel-index coordinate (pixel u's center sits at u)
  double v;
  double depth;  // camera z
};

/// K⁻¹ · (u + 0.5, v + 0.5, 1) for integer or continuous pixel-index coordinates.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> pixel_ray(const Intrinsics& k, Scalar u, Scalar v) {
  return {(u + Scalar(kPixelCenterOffset) - Scalar(k.cx)) / Scalar(k.fx),
          (v + Scalar(kPixelCenterOffset) - Scalar(k.cy)) / Scalar(k.fy), Scalar(1)};
}

PixelProjection project(const Vec3& world_point, const CameraView& view);

/// Lifts every valid pixel: R · (D(x) · K⁻¹ · x̂) + t, in row-major pixel order.
PointCloud backproject(const DepthMap& depth, const CameraView& view);
PointCloud backproject(const DepthMap& depth, const CameraView& view, const RgbImage& colors);

/// Row-major indices (v * width + u) of valid pixels, in backproject's output order.
std::vector<Eigen::Index> valid_pixel_indices(const DepthMap& depth);

/// One ray per pixel, row-major.
std::vector<PluckerRay> plucker_rays(const CameraView& view);

template <typename Derived>
Eigen::Matrix3d rotation_about(const Eigen::MatrixBase<Derived>& axis, double angle_rad) {
  return Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
}

/// Geodesic distance on SO(3), radians. Same value as acos((tr(AᵀB) - 1) / 2)
/// with the cosine clamped, but evaluated through atan2 so that angles near
/// zero keep full precision.
template <typename DerivedA, typename DerivedB>
double geodesic_angle(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  const Eigen::Matrix3d rel = a.transpose() * b;
  const double c = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
  const Eigen::Vector3d axis(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0), rel(1, 0) - rel(0, 1));
  return std::atan2(axis.norm() / 2.0, c);
}

double deg_to_rad(double deg);
double rad_to_deg(double rad);

}  // namespace geomem
