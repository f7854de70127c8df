#include "geomem/ports.hpp"

#include "geomem/errors.hpp"
#include "geomem/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

namespace geomem {

namespace fs = std::filesystem;

void GeneratedClip::validate(std::size_t expected) const {
  if (frames.size() != expected || depths.size() != expected) {
    throw InputError("generated clip has " + std::to_string(frames.size()) + " frames and " +
                     std::to_string(depths.size()) + " depth maps, expected " + std::to_string(expected));
  }
  for (std::size_t i = 0; i < expected; ++i) {
    const auto& d = depths[i];
    if (d.width() != frames[i].width || d.height() != frames[i].height) {
      throw InputError("generated clip: frame " + std::to_string(i) + " and its depth map differ in size");
    }
    for (int v = 0; v < d.height(); ++v) {
      for (int u = 0; u < d.width(); ++u) {
        if (d.valid(v, u) && !(d.values(v, u) > 0.0 && std::isfinite(d.values(v, u)))) {
          throw InputError("generated clip: non-positive valid depth in frame " + std::to_string(i));
        }
      }
    }
  }
}

GeneratedClip OracleGenerator::generate(const GenerateRequest& request) {
  GeneratedClip clip;
  clip.frames.reserve(request.trajectory.size());
  clip.depths.reserve(request.trajectory.size());
  for (const auto& view : request.trajectory) {
    Render r = scene_.render(view);
    clip.frames.push_back(std::move(r.image));
    clip.depths.push_back(std::move(r.depth));
  }
  return clip;
}

namespace {

std::string numbered(const char* pattern, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, static_cast<int>(i));
  return buf;
}

}  // namespace

fs::path ReplayGenerator::clip_dir(const fs::path& root, int trajectory_index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "traj_%02d", trajectory_index);
  return root / buf;
}

GeneratedClip ReplayGenerator::generate(const GenerateRequest& request) {
  const fs::path dir = clip_dir(root_, request.trajectory_index);
  if (!fs::is_directory(dir)) throw InputError("replay: missing clip directory " + dir.string());
  const auto cams = io::read_cameras(dir / "cams.json");
  if (cams.size() != request.trajectory.size()) {
    throw InputError("replay: " + (dir / "cams.json").string() + " lists " + std::to_string(cams.size()) +
                     " cameras, trajectory has " + std::to_string(request.trajectory.size()));
  }
  GeneratedClip clip;
  for (std::size_t i = 0; i < request.trajectory.size(); ++i) {
    clip.frames.push_back(io::read_png(dir / numbered("frame_%04d.png", i)));
    clip.depths.push_back(io::read_pfm(dir / numbered("depth_%04d.pfm", i)));
  }
  return clip;
}

void write_clip(const fs::path& dir, const GeneratedClip& clip, const std::vector<CameraView>& views) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < clip.frames.size(); ++i) {
    io::write_png(dir / numbered("frame_%04d.png", i), clip.frames[i]);
    io::write_pfm(dir / numbered("depth_%04d.pfm", i), clip.depths[i]);
  }
  io::write_cameras(dir / "cams.json", views);
}

namespace {

void check_inputs(const std::vector<RgbImage>& frames, const std::vector<DepthMap>& depths,
                  const std::vector<CameraView>& views) {
  if (frames.empty()) throw InputError("reconstruct: empty clip");
  if (frames.size() != depths.size() || frames.size() != views.size()) {
    throw InputError("reconstruct: frames, depths and views differ in count");
  }
}

Reconstruction lift(const std::vector<RgbImage>& frames, const std::vector<DepthMap>& depths,
                    const std::vector<CameraView>& views, const std::vector<CameraPose>& poses) {
  Reconstruction out;
  out.poses = poses;
  std::vector<PointCloud> parts;
  parts.reserve(frames.size());
  Eigen::Index total = 0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    CameraView v = views[i];
    v.pose = poses[i];
    parts.push_back(backproject(depths[i], v, frames[i]));
    total += parts.back().size();
  }
  Points3 pos(3, total), col(3, total);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    pos.middleCols(at, p.size()) = p.positions;
    col.middleCols(at, p.size()) = *p.colors;
    at += p.size();
  }
  out.cloud = PointCloud(std::move(pos), "reconstruction");
  out.cloud.colors = std::move(col);
  out.first_frame_points = parts.front().size();
  out.first_frame_pixels = valid_pixel_indices(depths.front());
  return out;
}

std::vector<CameraPose> relative_poses(const std::vector<CameraView>& views) {
  const CameraPose inv0 = views.front().pose.inverse();
  std::vector<CameraPose> poses;
  poses.reserve(views.size());
  for (const auto& v : views) poses.push_back(inv0 * v.pose);
  poses.front() = CameraPose{};
  return poses;
}

}  // namespace

Reconstruction OracleReconstructor::reconstruct(const std::vector<RgbImage>& frames,
                                                const std::vector<DepthMap>& depths,
                                                const std::vector<CameraView>& views, int) {
  check_inputs(frames, depths, views);
  return lift(frames, depths, views, relative_poses(views));
}

Reconstruction NoisyReconstructor::reconstruct(const std::vector<RgbImage>& frames,
                                               const std::vector<DepthMap>& depths,
                                               const std::vector<CameraView>& views, int trajectory_index) {
  check_inputs(frames, depths, views);
  std::seed_seq seq{options_.seed, static_cast<std::uint64_t>(trajectory_index) + 1};
  Rng rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);

  double sq = 0.0;
  Eigen::Index count = 0;
  std::vector<DepthMap> noisy = depths;
  std::vector<double> all_depths;
  for (std::size_t f = 0; f < noisy.size(); ++f) {
    DepthMap& d = noisy[f];
    for (int v = 0; v < d.height(); ++v) {
      for (int u = 0; u < d.width(); ++u) {
        if (!d.valid(v, u)) continue;
        const double z = d.values(v, u);
        all_depths.push_back(z);
        const double dz = z * options_.depth_sigma * normal(rng);
        d.values(v, u) = z + dz;
        if (!(d.values(v, u) > 0.0)) d.invalidate(v, u);
        // displacement along the pixel ray: |dz| · ‖K⁻¹x̂‖
        sq += dz * dz * pixel_ray<double>(views[f].intrinsics, u, v).squaredNorm();
        ++count;
      }
    }
  }

  std::vector<CameraPose> poses = relative_poses(views);
  if (options_.rotation_deg > 0.0 || options_.translation > 0.0) {
    double median = 1.0;
    if (!all_depths.empty()) {
      auto mid = all_depths.begin() + std::ptrdiff_t(all_depths.size() / 2);
      std::nth_element(all_depths.begin(), mid, all_depths.end());
      median = *mid;
    }
    for (std::size_t i = 1; i < poses.size(); ++i) {
      const Vec3 axis(normal(rng), normal(rng), normal(rng));
      const double angle = deg_to_rad(options_.rotation_deg) * normal(rng);
      if (axis.norm() > 0.0) poses[i].rotation = rotation_about(axis, angle) * poses[i].rotation;
      poses[i].translation += options_.translation * median * Vec3(normal(rng), normal(rng), normal(rng));
    }
  }

  Reconstruction out = lift(frames, noisy, views, poses);
  out.first_frame_pixels = valid_pixel_indices(noisy.front());
  out.induced_noise_rms = count > 0 ? std::sqrt(sq / double(count)) : 0.0;
  if (options_.scale != 1.0) {
    if (!(options_.scale > 0.0)) throw InputError("noisy reconstructor: scale must be positive");
    out.cloud.positions *= options_.scale;
    for (auto& p : out.poses) p.translation *= options_.scale;
    out.induced_noise_rms *= options_.scale;
  }
  return out;
}

}  // namespace geomem
