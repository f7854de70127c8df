#include "geomem/point_cloud.hpp"

#include "geomem/errors.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace geomem {

void PointCloud::validate() const {
  if (!positions.allFinite()) throw InputError("point cloud: non-finite coordinates");
  if (colors && colors->cols() != positions.cols()) {
    throw InputError("point cloud: color count does not match point count");
  }
}

PointCloud transformed(const PointCloud& cloud, const Sim3d& transform, std::string frame_label) {
  PointCloud out(transform.apply(cloud.positions), frame_label.empty() ? cloud.frame_label : std::move(frame_label));
  out.colors = cloud.colors;
  return out;
}

PointCloud concatenate(const PointCloud& a, const PointCloud& b) {
  if (a.empty()) {
    PointCloud out = b;
    out.frame_label = a.frame_label;
    return out;
  }
  if (b.empty()) return a;
  PointCloud out;
  out.frame_label = a.frame_label;
  out.positions.resize(3, a.size() + b.size());
  out.positions << a.positions, b.positions;
  if (a.has_colors() && b.has_colors()) {
    out.colors = Points3(3, a.size() + b.size());
    *out.colors << *a.colors, *b.colors;
  }
  return out;
}

PointCloud select(const PointCloud& cloud, const std::vector<Eigen::Index>& indices) {
  PointCloud out;
  out.frame_label = cloud.frame_label;
  out.positions = cloud.positions(Eigen::all, indices);
  if (cloud.colors) out.colors = (*cloud.colors)(Eigen::all, indices);
  return out;
}

double bounding_box_diagonal(const PointCloud& cloud) {
  if (cloud.empty()) return 0.0;
  return (cloud.positions.rowwise().maxCoeff() - cloud.positions.rowwise().minCoeff()).norm();
}

double default_voxel_size(const PointCloud& cloud) {
  const double diag = bounding_box_diagonal(cloud);
  return diag > 0.0 ? 0.01 * diag : 1.0;
}

VoxelKey voxel_of(const Vec3& p, double voxel) {
  return {static_cast<std::int64_t>(std::floor(p.x() / voxel)), static_cast<std::int64_t>(std::floor(p.y() / voxel)),
          static_cast<std::int64_t>(std::floor(p.z() / voxel))};
}

namespace {

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ull;
    h ^= static_cast<std::uint64_t>(k.y) * 0xC2B2AE3D27D4EB4Full + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667B19E3779F9ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

void check_voxel(double voxel) {
  if (!(voxel > 0.0) || !std::isfinite(voxel)) throw InputError("voxel size must be positive and finite");
}

}  // namespace

std::vector<VoxelKey> occupied_voxels(const PointCloud& cloud, double voxel) {
  check_voxel(voxel);
  std::vector<VoxelKey> keys;
  keys.reserve(static_cast<std::size_t>(cloud.size()));
  for (Eigen::Index i = 0; i < cloud.size(); ++i) keys.push_back(voxel_of(cloud.positions.col(i), voxel));
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  return keys;
}

PointCloud voxel_downsample(const PointCloud& cloud, double voxel) {
  check_voxel(voxel);
  std::unordered_map<VoxelKey, Eigen::Index, VoxelKeyHash> slot;
  slot.reserve(static_cast<std::size_t>(cloud.size()));
  std::vector<Eigen::Index> counts;
  Points3 pos_sum(3, cloud.size());
  Points3 rgb_sum(3, cloud.has_colors() ? cloud.size() : 0);

  Eigen::Index used = 0;
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    const auto [it, inserted] = slot.try_emplace(voxel_of(cloud.positions.col(i), voxel), used);
    const Eigen::Index s = it->second;
    if (inserted) {
      pos_sum.col(s).setZero();
      if (cloud.has_colors()) rgb_sum.col(s).setZero();
      counts.push_back(0);
      ++used;
    }
    pos_sum.col(s) += cloud.positions.col(i);
    if (cloud.has_colors()) rgb_sum.col(s) += cloud.colors->col(i);
    ++counts[static_cast<std::size_t>(s)];
  }

  PointCloud out;
  out.frame_label = cloud.frame_label;
  out.positions.resize(3, used);
  for (Eigen::Index s = 0; s < used; ++s) out.positions.col(s) = pos_sum.col(s) / double(counts[std::size_t(s)]);
  if (cloud.has_colors()) {
    out.colors = Points3(3, used);
    for (Eigen::Index s = 0; s < used; ++s) out.colors->col(s) = rgb_sum.col(s) / double(counts[std::size_t(s)]);
  }
  return out;
}

PointCloud merge(const PointCloud& a, const PointCloud& b, const Sim3d& transform_b_to_a, double voxel) {
  return voxel_downsample(concatenate(a, transformed(b, transform_b_to_a, a.frame_label)), voxel);
}

}  // namespace geomem
