#include "geomem/geometry.hpp"

#include "geomem/errors.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace geomem {

Mat3 Intrinsics::matrix() const {
  Mat3 k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Mat3 Intrinsics::inverse_matrix() const {
  Mat3 k;
  k << 1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0;
  return k;
}

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy)) {
    throw InputError("intrinsics: focal lengths must be positive and finite");
  }
  if (width <= 0 || height <= 0) throw InputError("intrinsics: image size must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    std::ostringstream os;
    os << "intrinsics: principal point (" << cx << ", " << cy << ") outside " << width << "x" << height;
    throw InputError(os.str());
  }
}

Intrinsics Intrinsics::from_fov(double fov_h_deg, double fov_v_deg, int width, int height) {
  if (!(fov_h_deg > 0.0 && fov_h_deg < 180.0) || !(fov_v_deg > 0.0 && fov_v_deg < 180.0)) {
    throw InputError("intrinsics: pinhole field of view must be in (0, 180) degrees");
  }
  Intrinsics k;
  k.width = width;
  k.height = height;
  k.fx = 0.5 * width / std::tan(deg_to_rad(fov_h_deg) / 2.0);
  k.fy = 0.5 * height / std::tan(deg_to_rad(fov_v_deg) / 2.0);
  k.cx = 0.5 * width;
  k.cy = 0.5 * height;
  return k;
}

CameraPose CameraPose::inverse() const {
  CameraPose inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

void CameraPose::validate(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) throw InputError("pose: non-finite entries");
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  const double det = rotation.determinant();
  if (ortho > tol || std::abs(det - 1.0) > tol) {
    std::ostringstream os;
    os << "pose: rotation is not a proper rotation (|RᵀR - I| = " << ortho << ", det = " << det << ")";
    throw InputError(os.str());
  }
}

CameraPose CameraPose::look_at(const Vec3& eye, const Vec3& target, const Vec3& down_hint) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = down_hint.cross(z);
  if (x.norm() < 1e-12) {
    // down_hint parallel to the viewing direction: pick any perpendicular axis
    x = z.unitOrthogonal();
  }
  x.normalize();
  const Vec3 y = z.cross(x);
  CameraPose pose;
  pose.rotation.col(0) = x;
  pose.rotation.col(1) = y;
  pose.rotation.col(2) = z;
  pose.translation = eye;
  return pose;
}

CameraPose operator*(const CameraPose& a, const CameraPose& b) {
  CameraPose out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

CameraPose transform_pose(const Sim3d& t, const CameraPose& pose) {
  CameraPose out;
  out.rotation = t.rotation * pose.rotation;
  out.translation = t.apply_point(pose.translation);
  return out;
}

void CameraView::validate() const {
  if (frame_id < 0) throw InputError("camera view: frame_id must be non-negative");
  intrinsics.validate();
  pose.validate();
}

DepthMap::DepthMap(DepthGrid depth) : values(std::move(depth)) {
  valid = values.unaryExpr([](double d) { return std::isfinite(d) && d > 0.0; });
}

PixelProjection project(const Vec3& world_point, const CameraView& view) {
  const Vec3 pc = view.pose.to_camera(world_point);
  const auto& k = view.intrinsics;
  return {k.fx * pc.x() / pc.z() + k.cx - kPixelCenterOffset, k.fy * pc.y() / pc.z() + k.cy - kPixelCenterOffset,
          pc.z()};
}

namespace {

void check_depth_matches(const DepthMap& depth, const CameraView& view) {
  view.validate();
  if (depth.width() != view.intrinsics.width || depth.height() != view.intrinsics.height) {
    std::ostringstream os;
    os << "backproject: depth is " << depth.width() << "x" << depth.height() << " but camera expects "
       << view.intrinsics.width << "x" << view.intrinsics.height;
    throw InputError(os.str());
  }
  if (depth.valid.rows() != depth.values.rows() || depth.valid.cols() != depth.values.cols()) {
    throw InputError("backproject: validity mask does not match depth grid");
  }
}

}  // namespace

std::vector<Eigen::Index> valid_pixel_indices(const DepthMap& depth) {
  std::vector<Eigen::Index> idx;
  idx.reserve(static_cast<std::size_t>(depth.valid_count()));
  for (int v = 0; v < depth.height(); ++v) {
    for (int u = 0; u < depth.width(); ++u) {
      if (depth.valid(v, u)) idx.push_back(Eigen::Index(v) * depth.width() + u);
    }
  }
  return idx;
}

PointCloud backproject(const DepthMap& depth, const CameraView& view) {
  check_depth_matches(depth, view);
  const auto idx = valid_pixel_indices(depth);
  const auto& k = view.intrinsics;
  Points3 cam(3, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const int v = static_cast<int>(idx[i] / depth.width());
    const int u = static_cast<int>(idx[i] % depth.width());
    cam.col(Eigen::Index(i)) = depth.values(v, u) * pixel_ray<double>(k, u, v);
  }
  Points3 world = view.pose.rotation * cam;
  world.colwise() += view.pose.translation;
  return PointCloud(std::move(world));
}

PointCloud backproject(const DepthMap& depth, const CameraView& view, const RgbImage& colors) {
  if (colors.width != depth.width() || colors.height != depth.height()) {
    throw InputError("backproject: color image size does not match depth");
  }
  PointCloud cloud = backproject(depth, view);
  const auto idx = valid_pixel_indices(depth);
  Points3 rgb(3, cloud.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    rgb.col(Eigen::Index(i)) = colors.pixels.row(idx[i]).transpose().cast<double>();
  }
  cloud.colors = std::move(rgb);
  return cloud;
}

std::vector<PluckerRay> plucker_rays(const CameraView& view) {
  const auto& k = view.intrinsics;
  std::vector<PluckerRay> rays;
  rays.reserve(std::size_t(k.width) * std::size_t(k.height));
  const Vec3& origin = view.pose.center();
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      const Vec3 d = (view.pose.rotation * pixel_ray<double>(k, u, v)).normalized();
      rays.push_back({d, origin.cross(d)});
    }
  }
  return rays;
}

double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

}  // namespace geomem
