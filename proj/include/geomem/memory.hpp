#pragma once

#include "geomem/geometry.hpp"
#include "geomem/point_cloud.hpp"

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace geomem {

using Rng = std::mt19937_64;

enum class SourceTag { Initial, Panorama, Generated };

std::string to_string(SourceTag tag);
SourceTag source_tag_from_string(const std::string& s);

/// A posed frame handed to the memory bank.
struct Frame {
  CameraView view;
  std::shared_ptr<const RgbImage> image;  // may be null when only the path is known
  std::string image_path;
};

struct BankEntry {
  Frame frame;
  SourceTag tag = SourceTag::Generated;

  const CameraView& view() const { return frame.view; }
};

/// Temporally downsampled store of posed frames used for reference retrieval.
struct MemoryBank {
  std::vector<BankEntry> entries;
  int stride = 8;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
  std::size_t count(SourceTag tag) const;
};

/// Returns a new bank with every stride-th generated frame appended (clip
/// positions 0, stride, 2·stride, ...). Initial and panorama frames are always
/// kept. Throws DuplicateError, leaving the input untouched, when a
/// (tag, frame_id) already exists or repeats within the batch.
MemoryBank bank_insert(const MemoryBank& bank, const std::vector<Frame>& frames, SourceTag tag);

/// Incrementally merged global point cloud.
struct Cache3D {
  PointCloud global_cloud;
  std::vector<CameraView> contributing_views;
  int generation = 0;
  double voxel = 0.0;  // <= 0: chosen from the first inserted cloud
  Sim3d last_alignment;

  bool empty() const { return global_cloud.empty(); }
};

/// Corresponding points: source in the incoming cloud's frame, target in the cache frame.
struct OverlapPairs {
  Points3 source = Points3(3, 0);
  Points3 target = Points3(3, 0);

  Eigen::Index size() const { return source.cols(); }
};

/// First insertion adopts new_cloud's frame. Later insertions align new_cloud
/// with a similarity fitted on the overlap pairs, then merge. views are given in
/// new_cloud's frame and stored in the cache frame. Throws AlignmentError
/// (cache unchanged) when the overlap is insufficient or degenerate.
Cache3D cache_update(const Cache3D& cache, const PointCloud& new_cloud, const OverlapPairs& overlap,
                     const std::vector<CameraView>& views = {});

struct GGMCondition {
  PointCloud reference_points;
  PointCloud auxiliary_points;
  PointCloud combined;
};

/// Reference cloud followed by the aligned cache points that are not within
/// dedup_radius of a reference point (dedup_radius <= 0 uses cache.voxel).
GGMCondition assemble_ggm(const PointCloud& reference, const Cache3D& cache, const Sim3d& align,
                          double dedup_radius = 0.0);

// ------------------------------------------------------------ training-time masking

enum class MaskKind { RandomPixels, Rectangle };

struct MaskRecord {
  MaskKind kind = MaskKind::RandomPixels;
  double drawn_fraction = 0.0;     // the sampled target fraction
  double realized_fraction = 0.0;  // dropped / valid pixels, or occluded / map area
  Eigen::Index masked_pixels = 0;
};

struct AugmentOptions {
  double pixel_fraction_min = 0.30;
  double pixel_fraction_max = 0.70;
  double rect_fraction_min = 0.20;
  double rect_fraction_max = 0.70;
  double p_random_pixels = 0.5;
  Sim3d world_to_reference;
};

struct AuxFrame {
  DepthMap depth;
  CameraView view;
};

struct AugmentResult {
  PointCloud cloud;
  std::vector<MaskRecord> records;
};

/// Drops round(fraction · valid) valid pixels chosen uniformly without replacement.
MaskRecord apply_random_pixel_mask(DepthMap& depth, double fraction, Rng& rng,
                                   double min_fraction = 0.30, double max_fraction = 0.70);

/// Invalidates a uniformly placed axis-aligned rectangle covering ≈ area_fraction of the map.
MaskRecord apply_rectangle_mask(DepthMap& depth, double area_fraction, Rng& rng, double min_fraction = 0.20,
                                double max_fraction = 0.70);

/// Uniform on {1, 2, 3, 4}.
int sample_aux_frame_count(Rng& rng);

/// One augmentation per auxiliary frame (random pixels or a rectangle, chosen
/// 50/50), then back-projection of the survivors into the reference frame.
AugmentResult ggm_train_augment(const std::vector<AuxFrame>& frames, std::uint64_t seed,
                                const AugmentOptions& options = {});

}  // namespace geomem
