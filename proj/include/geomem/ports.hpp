#pragma once

#include "geomem/geometry.hpp"
#include "geomem/memory.hpp"
#include "geomem/retrieval.hpp"
#include "geomem/scene.hpp"
#include "geomem/stereo_attn.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace geomem {

/// Everything a video generator is conditioned on for one trajectory.
struct GenerateRequest {
  int trajectory_index = 0;
  Frame start;                          // start image and view (world frame)
  std::vector<CameraView> trajectory;   // target poses (world frame)
  GGMCondition condition;               // reference + cache points (world frame)
  RetrievalPlan plan;
  std::vector<std::optional<Frame>> references;  // one per plan pair, empty when none attached
  std::vector<PointMapImage> target_pointmaps;   // one per attached reference
  std::vector<PointMapImage> reference_pointmaps;
};

struct GeneratedClip {
  std::vector<RgbImage> frames;
  std::vector<DepthMap> depths;  // z-depth per frame

  /// Throws InputError unless there are `expected` frames and depths of one size
  /// with positive valid depths.
  void validate(std::size_t expected) const;
};

class GeneratorPort {
 public:
  virtual ~GeneratorPort() = default;
  virtual std::string name() const = 0;
  virtual GeneratedClip generate(const GenerateRequest& request) = 0;
};

/// Renders the requested poses from an analytic scene.
class OracleGenerator : public GeneratorPort {
 public:
  explicit OracleGenerator(SyntheticScene scene) : scene_(std::move(scene)) {}
  std::string name() const override { return "oracle"; }
  GeneratedClip generate(const GenerateRequest& request) override;

 private:
  SyntheticScene scene_;
};

/// Reads pre-generated clips from root/traj_XX/{frame_%04d.png, depth_%04d.pfm, cams.json}.
class ReplayGenerator : public GeneratorPort {
 public:
  explicit ReplayGenerator(std::filesystem::path root) : root_(std::move(root)) {}
  std::string name() const override { return "replay"; }
  GeneratedClip generate(const GenerateRequest& request) override;

  static std::filesystem::path clip_dir(const std::filesystem::path& root, int trajectory_index);

 private:
  std::filesystem::path root_;
};

/// Writes a clip in the replay directory layout.
void write_clip(const std::filesystem::path& dir, const GeneratedClip& clip, const std::vector<CameraView>& views);

/// Reconstruction of one clip, expressed in its first camera's frame.
struct Reconstruction {
  PointCloud cloud;
  std::vector<CameraPose> poses;  // per frame, camera-to-reconstruction
  /// The first `first_frame_points` points come from frame 0, lifted from these pixels (row-major indices).
  std::vector<Eigen::Index> first_frame_pixels;
  Eigen::Index first_frame_points = 0;
  double induced_noise_rms = 0.0;  // RMS displacement of the lifted points caused by depth noise
};

class ReconstructorPort {
 public:
  virtual ~ReconstructorPort() = default;
  virtual std::string name() const = 0;
  /// `views` carries intrinsics; poses are used only by oracle-style implementations.
  virtual Reconstruction reconstruct(const std::vector<RgbImage>& frames, const std::vector<DepthMap>& depths,
                                     const std::vector<CameraView>& views, int trajectory_index) = 0;
};

/// Back-projects the supplied depths with the supplied poses.
class OracleReconstructor : public ReconstructorPort {
 public:
  std::string name() const override { return "oracle"; }
  Reconstruction reconstruct(const std::vector<RgbImage>& frames, const std::vector<DepthMap>& depths,
                             const std::vector<CameraView>& views, int trajectory_index) override;
};

struct NoiseOptions {
  double depth_sigma = 0.01;  // multiplicative: d · (1 + σ·n)
  double rotation_deg = 0.0;  // per-frame pose noise (frames after the first)
  double translation = 0.0;   // in units of the median clip depth
  double scale = 1.0;         // global scale of the reconstruction
  std::uint64_t seed = 0;
};

/// Oracle reconstruction with depth noise, pose noise and a global scale, seeded per trajectory.
class NoisyReconstructor : public ReconstructorPort {
 public:
  explicit NoisyReconstructor(NoiseOptions options = {}) : options_(options) {}
  std::string name() const override { return "noisy"; }
  Reconstruction reconstruct(const std::vector<RgbImage>& frames, const std::vector<DepthMap>& depths,
                             const std::vector<CameraView>& views, int trajectory_index) override;
  const NoiseOptions& options() const { return options_; }

 private:
  NoiseOptions options_;
};

}  // namespace geomem
