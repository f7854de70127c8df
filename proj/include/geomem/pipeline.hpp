#pragma once

#include "geomem/evaluation.hpp"
#include "geomem/memory.hpp"
#include "geomem/panorama.hpp"
#include "geomem/ports.hpp"
#include "geomem/trajectory.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace geomem {

struct PipelineConfig {
  std::string scene = "spheres";  // preset name or scene JSON path
  std::filesystem::path out_dir = "geomem_out";
  int frames = kDefaultTrajectoryFrames;
  std::vector<TrajectoryKind> order = {TrajectoryKind::Orbit, TrajectoryKind::Up, TrajectoryKind::Right,
                                       TrajectoryKind::Left};
  int width = 64;
  int height = 48;
  int bank_stride = 8;
  double voxel = 0.0;  // world units; <= 0 picks 0.01 × bounding-box diagonal of the first cloud
  int retrieval_samples = 8192;
  double overlap_floor = 0.05;
  std::uint64_t retrieval_seed = 0;
  double f1_threshold = 0.0;         // <= 0: 3 × induced noise RMS when noisy, else 2 × voxel
  std::vector<double> auc_thresholds;  // empty: voxel × {0.5, 1, 2, 4, 8}
  std::string generator = "oracle";  // oracle | replay
  std::filesystem::path replay_dir;
  std::string reconstructor = "oracle";  // oracle | noisy
  NoiseOptions noise;
  bool icp_refine = false;
  bool write_frames = true;
  bool write_gt = false;
  int pano_width = 1024;
  int pano_height = 512;
  bool rank_orders = true;  // panorama runs only
  int rank_samples = 2000;

  /// Throws InputError on bad values or missing referenced files.
  void validate() const;
  nlohmann::json to_json() const;

  /// Keys mirror the field names; [noise] and [pano] tables hold the nested ones.
  static PipelineConfig from_toml_file(const std::filesystem::path& path);
  static PipelineConfig from_toml_string(const std::string& text);
};

struct PipelineResult {
  nlohmann::json report;
  MemoryBank bank;
  Cache3D cache;
  Sim3d cache_to_world;
  PointCloud merged_world;
  PointCloud ground_truth;
  PcdMetrics pcd;
  double auc = 0.0;
  CamMetrics cameras;
};

/// Per trajectory: synthesize → assemble_ggm → plan_retrieval → pointmaps →
/// generate → bank_insert → reconstruct → cache_update; then evaluation against
/// the scene. Artifacts and report.json go to cfg.out_dir. Any failure is
/// rethrown as StageError after writing failure.json next to the partial artifacts.
PipelineResult run_pipeline(const PipelineConfig& cfg);
PipelineResult run_pipeline(const PipelineConfig& cfg, GeneratorPort& generator, ReconstructorPort& reconstructor);

/// Seeds the bank with the 27 perspective splits and the cache with the
/// back-projected panorama, then runs the configured trajectory order. The
/// panorama must be centered at the world origin; `range` holds distances along rays.
PipelineResult run_panorama(const PipelineConfig& cfg, const RgbImage& pano, const EquirectDepth& range);

/// Renders the panorama from the configured scene, then runs as above.
PipelineResult run_panorama(const PipelineConfig& cfg);

/// Cache cloud from an equirectangular range map (invalid where range <= 0 or non-finite).
PointCloud backproject_panorama(const RgbImage& pano, const EquirectDepth& range, const Vec3& center = Vec3::Zero());

nlohmann::json bank_to_json(const MemoryBank& bank);

}  // namespace geomem
