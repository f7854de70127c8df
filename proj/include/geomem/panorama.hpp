#pragma once

#include "geomem/geometry.hpp"

#include <utility>
#include <vector>

namespace geomem {

// Equirectangular layout: column x spans longitude [-π, π) left to right, row y
// spans latitude [+π/2, -π/2] top to bottom. Longitude 0 / latitude 0 is the
// world +z axis; positive latitude points up (world -y).

/// Unit direction for (longitude, latitude) in radians.
Vec3 equirect_direction(double lon, double lat);

/// Continuous pixel-index coordinates (x, y) of a direction in a W×H panorama.
Eigen::Vector2d equirect_pixel(const Vec3& direction, int pano_width, int pano_height);

/// Bilinear sample, wrapping horizontally and clamping vertically.
Eigen::Vector3f sample_equirect(const RgbImage& pano, const Vec3& direction);

/// Camera rotation looking at (yaw, pitch): yaw turns right about the vertical
/// axis, positive pitch looks up.
Mat3 yaw_pitch_rotation(double yaw_deg, double pitch_deg);

struct PanoSplitOptions {
  double fov_v_deg = 90.0;
  double fov_h_deg = 120.0;
  std::vector<std::pair<double, double>> yaw_pitch_deg;  // empty → default 27-view grid
  int out_width = 256;
  int out_height = 192;
};

/// 9 yaws every 40° × pitches {-30°, 0°, +30°}.
std::vector<std::pair<double, double>> default_pano_grid();

struct PerspectiveView {
  RgbImage image;
  CameraView view;
};

/// Perspective crops of an equirectangular panorama; poses are pure rotations
/// about the panorama center (world origin). Throws InputError unless width = 2·height.
std::vector<PerspectiveView> pano_to_perspective(const RgbImage& pano, const PanoSplitOptions& options = {});

/// Equirectangular radial distance (range along each ray), H×W.
using EquirectDepth = DepthGrid;

/// z-depth seen by a pinhole view placed at the panorama center, nearest-neighbor
/// sampled from a radial-distance panorama.
DepthMap pano_depth_to_perspective(const EquirectDepth& pano_depth, const CameraView& view);

}  // namespace geomem
