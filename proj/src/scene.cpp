#include "geomem/scene.hpp"

#include "geomem/errors.hpp"
#include "geomem/io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace geomem {

Eigen::Vector3f Checker::at(const Vec3& p) const {
  const auto cellof = [&](double x) { return static_cast<long long>(std::floor(x / cell)); };
  const long long parity = cellof(p.x()) + cellof(p.y()) + cellof(p.z());
  return (parity & 1LL) ? b : a;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double hit_sphere(const Sphere& s, const Vec3& o, const Vec3& d, double t_min) {
  const Vec3 oc = o - s.center;
  const double a = d.squaredNorm();
  const double half_b = oc.dot(d);
  const double c = oc.squaredNorm() - s.radius * s.radius;
  const double disc = half_b * half_b - a * c;
  if (disc < 0.0) return kInf;
  const double root = std::sqrt(disc);
  // numerically stable pair of roots
  const double q = half_b >= 0.0 ? -(half_b + root) : -(half_b - root);
  double t0 = q / a;
  double t1 = q != 0.0 ? c / q : t0;
  if (t0 > t1) std::swap(t0, t1);
  if (t0 > t_min) return t0;
  if (t1 > t_min) return t1;
  return kInf;
}

double hit_box(const Box& b, const Vec3& o, const Vec3& d, double t_min) {
  double t_near = -kInf, t_far = kInf;
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < b.min[a] || o[a] > b.max[a]) return kInf;
      continue;
    }
    double t0 = (b.min[a] - o[a]) / d[a];
    double t1 = (b.max[a] - o[a]) / d[a];
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
  }
  if (t_near > t_far) return kInf;
  if (t_near > t_min) return t_near;
  return kInf;  // origin inside the solid box: treated as no visible surface
}

double hit_room(const Room& r, const Vec3& o, const Vec3& d, double t_min) {
  double t_exit = kInf;
  for (int a = 0; a < 3; ++a) {
    if (d[a] > 0.0) t_exit = std::min(t_exit, (r.max[a] - o[a]) / d[a]);
    if (d[a] < 0.0) t_exit = std::min(t_exit, (r.min[a] - o[a]) / d[a]);
  }
  return t_exit > t_min ? t_exit : kInf;
}

}  // namespace

std::optional<RayHit> SyntheticScene::intersect(const Vec3& origin, const Vec3& direction, double t_min) const {
  double best = kInf;
  int which = -1;
  for (std::size_t i = 0; i < shapes_.size(); ++i) {
    const double t = std::visit(
        [&](const auto& g) {
          using G = std::decay_t<decltype(g)>;
          if constexpr (std::is_same_v<G, Sphere>) return hit_sphere(g, origin, direction, t_min);
          if constexpr (std::is_same_v<G, Box>) return hit_box(g, origin, direction, t_min);
          if constexpr (std::is_same_v<G, Room>) return hit_room(g, origin, direction, t_min);
        },
        shapes_[i].geometry);
    if (t < best) {
      best = t;
      which = static_cast<int>(i);
    }
  }
  if (which < 0) return std::nullopt;
  RayHit hit;
  hit.t = best;
  hit.point = origin + best * direction;
  hit.shape = which;
  hit.color = shapes_[std::size_t(which)].texture.at(hit.point);
  return hit;
}

Render SyntheticScene::render(const CameraView& view) const {
  view.validate();
  const auto& k = view.intrinsics;
  Render out;
  out.image = RgbImage(k.width, k.height);
  DepthGrid z = DepthGrid::Constant(k.height, k.width, std::numeric_limits<double>::quiet_NaN());
  const Vec3 o = view.pose.center();
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      // the camera-frame ray has unit z, so the ray parameter is the z-depth
      const Vec3 dir = view.pose.rotation * pixel_ray<double>(k, u, v);
      if (const auto hit = intersect(o, dir)) {
        z(v, u) = hit->t;
        out.image.set(u, v, hit->color);
      }
    }
  }
  out.depth = DepthMap(std::move(z));
  return out;
}

PanoRender SyntheticScene::render_panorama(const Vec3& center, int width, int height) const {
  if (height <= 0 || width != 2 * height) throw InputError("render_panorama: width must be 2 x height");
  PanoRender out;
  out.image = RgbImage(width, height);
  out.range = EquirectDepth::Zero(height, width);
  for (int y = 0; y < height; ++y) {
    const double lat = std::numbers::pi / 2.0 - (y + 0.5) / height * std::numbers::pi;
    for (int x = 0; x < width; ++x) {
      const double lon = (x + 0.5) / width * 2.0 * std::numbers::pi - std::numbers::pi;
      if (const auto hit = intersect(center, equirect_direction(lon, lat))) {
        out.range(y, x) = hit->t;
        out.image.set(x, y, hit->color);
      }
    }
  }
  return out;
}

double SyntheticScene::median_depth(const CameraView& view) const {
  const Render r = render(view);
  std::vector<double> d;
  d.reserve(std::size_t(r.depth.valid_count()));
  for (int v = 0; v < r.depth.height(); ++v) {
    for (int u = 0; u < r.depth.width(); ++u) {
      if (r.depth.valid(v, u)) d.push_back(r.depth.values(v, u));
    }
  }
  if (d.empty()) throw InputError("median_depth: the view sees no geometry");
  const auto mid = d.begin() + std::ptrdiff_t(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  if (d.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(d.begin(), mid);
  return 0.5 * (lower + upper);
}

namespace {

using nlohmann::json;

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
json color_json(const Eigen::Vector3f& c) { return json::array({c.x(), c.y(), c.z()}); }

Vec3 vec_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw InputError(std::string("scene: '") + what + "' must be 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Eigen::Vector3f color_from(const json& j) {
  const Vec3 c = vec_from(j, "color");
  return c.cast<float>();
}

}  // namespace

json SyntheticScene::to_json() const {
  json shapes = json::array();
  for (const auto& s : shapes_) {
    json j;
    std::visit(
        [&](const auto& g) {
          using G = std::decay_t<decltype(g)>;
          if constexpr (std::is_same_v<G, Sphere>) {
            j = {{"type", "sphere"}, {"center", vec_json(g.center)}, {"radius", g.radius}};
          } else if constexpr (std::is_same_v<G, Box>) {
            j = {{"type", "box"}, {"min", vec_json(g.min)}, {"max", vec_json(g.max)}};
          } else {
            j = {{"type", "room"}, {"min", vec_json(g.min)}, {"max", vec_json(g.max)}};
          }
        },
        s.geometry);
    j["color_a"] = color_json(s.texture.a);
    j["color_b"] = color_json(s.texture.b);
    j["cell"] = s.texture.cell;
    shapes.push_back(j);
  }
  return {{"shapes", shapes}};
}

SyntheticScene SyntheticScene::from_json(const json& j) {
  if (!j.contains("shapes") || !j["shapes"].is_array()) throw InputError("scene: missing 'shapes' array");
  SyntheticScene scene;
  try {
    for (const auto& s : j["shapes"]) {
      Shape shape;
      const std::string type = s.at("type").get<std::string>();
      if (type == "sphere") {
        Sphere g{vec_from(s.at("center"), "center"), s.at("radius").get<double>()};
        if (!(g.radius > 0.0)) throw InputError("scene: sphere radius must be positive");
        shape.geometry = g;
      } else if (type == "box" || type == "room") {
        const Vec3 lo = vec_from(s.at("min"), "min");
        const Vec3 hi = vec_from(s.at("max"), "max");
        if (!(lo.array() < hi.array()).all()) throw InputError("scene: " + type + " needs min < max on every axis");
        if (type == "box") shape.geometry = Box{lo, hi};
        else shape.geometry = Room{lo, hi};
      } else {
        throw InputError("scene: unknown shape type '" + type + "'");
      }
      if (s.contains("color_a")) shape.texture.a = color_from(s["color_a"]);
      if (s.contains("color_b")) shape.texture.b = color_from(s["color_b"]);
      if (s.contains("cell")) shape.texture.cell = s["cell"].get<double>();
      if (!(shape.texture.cell > 0.0)) throw InputError("scene: checker cell must be positive");
      scene.add(shape);
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("scene: ") + e.what());
  }
  return scene;
}

namespace {

Shape textured(std::variant<Sphere, Box, Room> g, Eigen::Vector3f a, Eigen::Vector3f b, double cell) {
  return {g, Checker{a, b, cell}};
}

}  // namespace

std::vector<std::string> preset_names() { return {"spheres", "boxes", "room"}; }

ScenePreset make_preset(const std::string& name, int width, int height) {
  ScenePreset p;
  p.name = name;
  p.start.intrinsics = Intrinsics::from_fov(60.0, 2.0 * rad_to_deg(std::atan(std::tan(deg_to_rad(30.0)) * height / width)),
                                            width, height);
  p.start.frame_id = 0;
  const Eigen::Vector3f wall_a(0.85f, 0.80f, 0.70f), wall_b(0.55f, 0.50f, 0.45f);
  if (name == "spheres") {
    p.scene.add(textured(Room{{-12.0, -8.0, -10.0}, {12.0, 1.5, 14.0}}, wall_a, wall_b, 1.0));
    p.scene.add(textured(Sphere{{-1.2, 0.5, 4.0}, 1.0}, {0.9f, 0.2f, 0.2f}, {0.9f, 0.9f, 0.3f}, 0.3));
    p.scene.add(textured(Sphere{{1.5, 0.2, 5.5}, 1.3}, {0.2f, 0.4f, 0.9f}, {0.9f, 0.9f, 0.9f}, 0.4));
    p.scene.add(textured(Sphere{{0.0, -0.5, 7.5}, 1.0}, {0.2f, 0.8f, 0.3f}, {0.1f, 0.3f, 0.1f}, 0.25));
  } else if (name == "boxes") {
    p.scene.add(textured(Room{{-12.0, -8.0, -10.0}, {12.0, 1.5, 14.0}}, wall_a, wall_b, 1.0));
    p.scene.add(textured(Box{{-2.0, 0.0, 3.5}, {-0.5, 1.5, 5.0}}, {0.8f, 0.3f, 0.1f}, {0.3f, 0.1f, 0.0f}, 0.3));
    p.scene.add(textured(Box{{0.5, -1.0, 5.0}, {2.5, 1.5, 7.0}}, {0.1f, 0.6f, 0.8f}, {0.9f, 0.9f, 0.9f}, 0.4));
    p.scene.add(textured(Box{{-1.0, -0.5, 8.0}, {1.0, 1.5, 9.0}}, {0.6f, 0.2f, 0.7f}, {0.2f, 0.9f, 0.4f}, 0.35));
    p.scene.add(textured(Sphere{{-2.5, -1.5, 7.0}, 0.7}, {0.95f, 0.95f, 0.2f}, {0.4f, 0.2f, 0.1f}, 0.2));
  } else if (name == "room") {
    p.scene.add(textured(Room{{-6.0, -3.0, -6.0}, {6.0, 1.5, 8.0}}, wall_a, wall_b, 0.75));
    p.scene.add(textured(Sphere{{1.5, 0.5, 3.0}, 0.8}, {0.9f, 0.2f, 0.2f}, {0.9f, 0.9f, 0.3f}, 0.25));
    p.scene.add(textured(Box{{-2.0, 0.3, 2.0}, {-0.8, 1.5, 3.2}}, {0.1f, 0.6f, 0.8f}, {0.9f, 0.9f, 0.9f}, 0.3));
    p.scene.add(textured(Box{{2.0, -0.5, -3.0}, {3.5, 1.5, -1.5}}, {0.6f, 0.2f, 0.7f}, {0.2f, 0.9f, 0.4f}, 0.3));
    p.scene.add(textured(Sphere{{-2.5, 0.0, -2.5}, 1.0}, {0.2f, 0.8f, 0.3f}, {0.1f, 0.3f, 0.1f}, 0.3));
  } else {
    throw InputError("unknown scene preset '" + name + "' (expected spheres, boxes or room)");
  }
  return p;
}

ScenePreset load_scene(const std::string& name_or_path, int width, int height) {
  const auto names = preset_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end()) {
    return make_preset(name_or_path, width, height);
  }
  if (!std::filesystem::exists(name_or_path)) {
    throw InputError("scene '" + name_or_path + "' is neither a preset nor an existing file");
  }
  const json j = io::read_json(name_or_path);
  ScenePreset p = make_preset("spheres", width, height);
  p.name = std::filesystem::path(name_or_path).stem().string();
  p.scene = SyntheticScene::from_json(j);
  if (j.contains("start")) p.start = io::camera_from_json(j["start"]);
  if (j.contains("pano_center")) p.pano_center = vec_from(j["pano_center"], "pano_center");
  return p;
}

}  // namespace geomem
