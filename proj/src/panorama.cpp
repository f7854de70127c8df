#include "geomem/panorama.hpp"

#include "geomem/errors.hpp"

#include <cmath>
#include <numbers>

namespace geomem {

namespace {

constexpr double kPi = std::numbers::pi;

int wrap(int x, int n) {
  const int r = x % n;
  return r < 0 ? r + n : r;
}

void check_equirect(int width, int height, const char* what) {
  if (height <= 0 || width != 2 * height) {
    throw InputError(std::string(what) + ": equirectangular input must have width = 2 x height");
  }
}

}  // namespace

Vec3 equirect_direction(double lon, double lat) {
  return {std::cos(lat) * std::sin(lon), -std::sin(lat), std::cos(lat) * std::cos(lon)};
}

Eigen::Vector2d equirect_pixel(const Vec3& direction, int pano_width, int pano_height) {
  const Vec3 d = direction.normalized();
  const double lon = std::atan2(d.x(), d.z());
  const double lat = std::asin(std::clamp(-d.y(), -1.0, 1.0));
  return {(lon + kPi) / (2.0 * kPi) * pano_width - 0.5, (kPi / 2.0 - lat) / kPi * pano_height - 0.5};
}

Eigen::Vector3f sample_equirect(const RgbImage& pano, const Vec3& direction) {
  const Eigen::Vector2d xy = equirect_pixel(direction, pano.width, pano.height);
  const double xf = std::floor(xy.x());
  const double yf = std::floor(xy.y());
  const float ax = static_cast<float>(xy.x() - xf);
  const float ay = static_cast<float>(xy.y() - yf);
  const int x0 = wrap(static_cast<int>(xf), pano.width);
  const int x1 = wrap(static_cast<int>(xf) + 1, pano.width);
  const int y0 = std::clamp(static_cast<int>(yf), 0, pano.height - 1);
  const int y1 = std::clamp(static_cast<int>(yf) + 1, 0, pano.height - 1);
  const Eigen::Vector3f top = (1.0f - ax) * pano.at(x0, y0) + ax * pano.at(x1, y0);
  const Eigen::Vector3f bottom = (1.0f - ax) * pano.at(x0, y1) + ax * pano.at(x1, y1);
  return (1.0f - ay) * top + ay * bottom;
}

Mat3 yaw_pitch_rotation(double yaw_deg, double pitch_deg) {
  const Mat3 yaw = rotation_about(Vec3::UnitY(), deg_to_rad(yaw_deg));
  const Mat3 pitch = rotation_about(Vec3::UnitX(), deg_to_rad(pitch_deg));
  return yaw * pitch;
}

std::vector<std::pair<double, double>> default_pano_grid() {
  std::vector<std::pair<double, double>> grid;
  for (double pitch : {-30.0, 0.0, 30.0}) {
    for (int i = 0; i < 9; ++i) grid.emplace_back(40.0 * i, pitch);
  }
  return grid;
}

std::vector<PerspectiveView> pano_to_perspective(const RgbImage& pano, const PanoSplitOptions& options) {
  check_equirect(pano.width, pano.height, "pano_to_perspective");
  if (!(options.fov_v_deg > 0.0 && options.fov_v_deg < 180.0)) {
    throw InputError("pano_to_perspective: vertical FoV must be in (0, 180)");
  }
  if (!(options.fov_h_deg > 0.0 && options.fov_h_deg < 360.0)) {
    throw InputError("pano_to_perspective: horizontal FoV must be in (0, 360)");
  }
  const auto grid = options.yaw_pitch_deg.empty() ? default_pano_grid() : options.yaw_pitch_deg;
  const Intrinsics k = Intrinsics::from_fov(options.fov_h_deg, options.fov_v_deg, options.out_width, options.out_height);

  std::vector<PerspectiveView> out;
  out.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    PerspectiveView pv;
    pv.view.intrinsics = k;
    pv.view.pose.rotation = yaw_pitch_rotation(grid[i].first, grid[i].second);
    pv.view.frame_id = static_cast<int>(i);
    pv.image = RgbImage(k.width, k.height);
    for (int v = 0; v < k.height; ++v) {
      for (int u = 0; u < k.width; ++u) {
        const Vec3 dir = pv.view.pose.rotation * pixel_ray<double>(k, u, v);
        pv.image.set(u, v, sample_equirect(pano, dir));
      }
    }
    out.push_back(std::move(pv));
  }
  return out;
}

DepthMap pano_depth_to_perspective(const EquirectDepth& pano_depth, const CameraView& view) {
  const int ph = static_cast<int>(pano_depth.rows());
  const int pw = static_cast<int>(pano_depth.cols());
  check_equirect(pw, ph, "pano_depth_to_perspective");
  const auto& k = view.intrinsics;
  DepthGrid z(k.height, k.width);
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      const Vec3 ray = pixel_ray<double>(k, u, v);
      const Eigen::Vector2d xy = equirect_pixel(view.pose.rotation * ray, pw, ph);
      const int x = wrap(static_cast<int>(std::lround(xy.x())), pw);
      const int y = std::clamp(static_cast<int>(std::lround(xy.y())), 0, ph - 1);
      z(v, u) = pano_depth(y, x) / ray.norm();
    }
  }
  return DepthMap(std::move(z));
}

}  // namespace geomem
