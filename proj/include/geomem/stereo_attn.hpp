#pragma once

#include "geomem/geometry.hpp"
#include "geomem/memory.hpp"

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <vector>

namespace geomem {

enum class GridRole { Target, Reference, PointmapTarget, PointmapReference, Stitched, Output };

std::string to_string(GridRole role);
GridRole grid_role_from_string(const std::string& s);

using TokenMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense F×H×W×C tensor, row-major (channel fastest). Frame f's tokens are the
/// contiguous H·W rows of token_matrix(f), in (h, w) order.
struct FeatureGrid {
  int frames = 0;
  int height = 0;
  int width = 0;
  int channels = 0;
  GridRole role = GridRole::Target;
  std::vector<double> data;

  FeatureGrid() = default;
  FeatureGrid(int f, int h, int w, int c, GridRole r = GridRole::Target)
      : frames(f), height(h), width(w), channels(c), role(r), data(std::size_t(f) * h * w * c, 0.0) {}

  std::size_t offset(int f, int h, int w, int c) const {
    return ((std::size_t(f) * height + std::size_t(h)) * width + std::size_t(w)) * channels + std::size_t(c);
  }
  double& at(int f, int h, int w, int c) { return data[offset(f, h, w, c)]; }
  double at(int f, int h, int w, int c) const { return data[offset(f, h, w, c)]; }

  Eigen::Map<TokenMatrix> token_matrix(int f) {
    return {data.data() + offset(f, 0, 0, 0), Eigen::Index(height) * width, channels};
  }
  Eigen::Map<const TokenMatrix> token_matrix(int f) const {
    return {data.data() + offset(f, 0, 0, 0), Eigen::Index(height) * width, channels};
  }

  bool same_shape(const FeatureGrid& o) const {
    return frames == o.frames && height == o.height && width == o.width && channels == o.channels;
  }
  bool all_finite() const;
  static FeatureGrid zeros_like(const FeatureGrid& g, GridRole role);
};

/// Target on the left half, reference on the right half of every frame.
struct StitchedPair {
  FeatureGrid stitched;
  FeatureGrid pointmap_latent;
  FeatureGrid ssm_input;  // stitched + pointmap_latent
};

/// Widthwise concatenation [z_tar ; z_ref] and [pm_tar ; pm_ref]; absent
/// references should be passed as zero grids. Throws InputError on shape mismatch.
StitchedPair stitch(const FeatureGrid& z_tar, const FeatureGrid& z_ref, const FeatureGrid& pm_tar,
                    const FeatureGrid& pm_ref);

/// Single-head attention parameters; queries and keys project C → D, values C → C_out.
struct AttentionWeights {
  Eigen::MatrixXd query;
  Eigen::MatrixXd key;
  Eigen::MatrixXd value;

  static AttentionWeights random(int channels, int key_dim, int out_channels, Rng& rng, double scale = 0.5);
};

/// Each (pair, frame) becomes one independent sequence of H·2W tokens
/// ([B·F, H·2W, C]); softmax attention runs within a sequence only, and the
/// left (target) half of every output is returned, one F×H×W×C_out grid per pair.
std::vector<FeatureGrid> ssm_attention(const std::vector<StitchedPair>& pairs, const AttentionWeights& weights);

/// Cache points rendered into a view: nearest point per pixel (one-pixel splat).
struct PointHits {
  int width = 0;
  int height = 0;
  Points3 world;  // 3 × (H·W), garbage where invalid
  MaskGrid valid;
};

PointHits render_point_hits(const CameraView& view, const PointCloud& cloud);

/// World-coordinate image, each channel min-max normalized over the joint valid
/// set of the pair; misses are invalid and colored 0. A channel with zero extent maps to 0.
struct PointMapImage {
  RgbImage rgb;
  MaskGrid valid;
};

/// Joint normalization over both views, so a 3-D point gets the same color in both images.
std::pair<PointMapImage, PointMapImage> make_pointmap_pair(const CameraView& target, const CameraView& reference,
                                                           const Cache3D& cache);

/// Single-view pointmap, normalized over its own valid set.
PointMapImage make_pointmap(const CameraView& view, const Cache3D& cache);

/// Pointmap as a 1×H×W×3 feature grid (the toy "latent").
FeatureGrid pointmap_to_grid(const PointMapImage& pm, GridRole role);

/// Image as a 1×H×W×3 feature grid.
FeatureGrid image_to_grid(const RgbImage& image, GridRole role);

}  // namespace geomem
