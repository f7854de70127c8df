#pragma once

#include "geomem/geometry.hpp"
#include "geomem/panorama.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace geomem {

/// Two-color checkerboard over world coordinates with cell edge `cell`.
struct Checker {
  Eigen::Vector3f a{0.8f, 0.8f, 0.8f};
  Eigen::Vector3f b{0.2f, 0.2f, 0.2f};
  double cell = 0.5;

  Eigen::Vector3f at(const Vec3& p) const;
};

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
};

/// Solid axis-aligned box, seen from outside.
struct Box {
  Vec3 min = Vec3::Constant(-0.5);
  Vec3 max = Vec3::Constant(0.5);
};

/// Axis-aligned room, seen from inside (the ray leaves through a wall).
struct Room {
  Vec3 min = Vec3::Constant(-5.0);
  Vec3 max = Vec3::Constant(5.0);
};

struct Shape {
  std::variant<Sphere, Box, Room> geometry;
  Checker texture;
};

struct RayHit {
  double t = 0.0;  // ray parameter: point = origin + t · direction
  Vec3 point = Vec3::Zero();
  Eigen::Vector3f color = Eigen::Vector3f::Zero();
  int shape = -1;
};

struct Render {
  RgbImage image;
  DepthMap depth;  // z-depth
};

struct PanoRender {
  RgbImage image;
  EquirectDepth range;  // distance along each ray
};

/// Analytic scene of spheres, boxes and an enclosing room with exact depth.
class SyntheticScene {
 public:
  SyntheticScene() = default;
  explicit SyntheticScene(std::vector<Shape> shapes) : shapes_(std::move(shapes)) {}

  const std::vector<Shape>& shapes() const { return shapes_; }
  void add(Shape s) { shapes_.push_back(std::move(s)); }

  /// Nearest hit with t > t_min along origin + t · direction (direction need not be unit).
  std::optional<RayHit> intersect(const Vec3& origin, const Vec3& direction, double t_min = 1e-9) const;

  /// Exact color and z-depth for every pixel; misses are invalid.
  Render render(const CameraView& view) const;

  /// Equirectangular color and range seen from `center` (world axes, see panorama.hpp).
  PanoRender render_panorama(const Vec3& center, int width, int height) const;

  /// Median valid z-depth seen from the view.
  double median_depth(const CameraView& view) const;

  nlohmann::json to_json() const;
  static SyntheticScene from_json(const nlohmann::json& j);

 private:
  std::vector<Shape> shapes_;
};

/// A named test scene with its default start camera and panorama center.
struct ScenePreset {
  std::string name;
  SyntheticScene scene;
  CameraView start;
  Vec3 pano_center = Vec3::Zero();
};

/// "spheres", "boxes" or "room"; the start camera has a 60° horizontal FoV.
ScenePreset make_preset(const std::string& name, int width = 64, int height = 48);
std::vector<std::string> preset_names();

/// A preset name, or a JSON scene file {shapes: [...], start: camera, pano_center: [x, y, z]}.
ScenePreset load_scene(const std::string& name_or_path, int width = 64, int height = 48);

}  // namespace geomem
