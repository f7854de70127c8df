#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace geomem {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Points3 = Eigen::Matrix3Xd;

/// Positions (and optional colors in [0,1]) stored column-wise, 3×N.
struct PointCloud {
  Points3 positions = Points3(3, 0);
  std::optional<Points3> colors;
  std::string frame_label = "world";

  PointCloud() = default;
  explicit PointCloud(Points3 pos, std::string frame = "world")
      : positions(std::move(pos)), frame_label(std::move(frame)) {}

  Eigen::Index size() const { return positions.cols(); }
  bool empty() const { return positions.cols() == 0; }
  bool has_colors() const { return colors.has_value(); }

  /// Throws InputError on non-finite coordinates or a color/position size mismatch.
  void validate() const;
};

/// x -> scale * rotation * x + translation.
template <typename Scalar>
struct SimilarityTransform {
  using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
  using Vector3 = Eigen::Matrix<Scalar, 3, 1>;

  Scalar scale = Scalar(1);
  Matrix3 rotation = Matrix3::Identity();
  Vector3 translation = Vector3::Zero();

  static SimilarityTransform identity() { return {}; }

  template <typename Derived>
  Eigen::Matrix<Scalar, 3, Eigen::Dynamic> apply(const Eigen::MatrixBase<Derived>& points) const {
    Eigen::Matrix<Scalar, 3, Eigen::Dynamic> out = (scale * rotation) * points;
    out.colwise() += translation;
    return out;
  }

  Vector3 apply_point(const Vector3& p) const { return scale * (rotation * p) + translation; }

  SimilarityTransform inverse() const {
    SimilarityTransform inv;
    inv.scale = Scalar(1) / scale;
    inv.rotation = rotation.transpose();
    inv.translation = -inv.scale * (inv.rotation * translation);
    return inv;
  }

  /// (this ∘ other)(x) = this(other(x)).
  SimilarityTransform operator*(const SimilarityTransform& other) const {
    SimilarityTransform out;
    out.scale = scale * other.scale;
    out.rotation = rotation * other.rotation;
    out.translation = scale * (rotation * other.translation) + translation;
    return out;
  }

  Eigen::Matrix<Scalar, 4, 4> matrix() const {
    Eigen::Matrix<Scalar, 4, 4> m = Eigen::Matrix<Scalar, 4, 4>::Identity();
    m.template topLeftCorner<3, 3>() = scale * rotation;
    m.template topRightCorner<3, 1>() = translation;
    return m;
  }

  template <typename Other>
  SimilarityTransform<Other> cast() const {
    SimilarityTransform<Other> out;
    out.scale = static_cast<Other>(scale);
    out.rotation = rotation.template cast<Other>();
    out.translation = translation.template cast<Other>();
    return out;
  }
};

using Sim3d = SimilarityTransform<double>;

/// Max absolute difference over (scale, rotation entries, translation).
template <typename Scalar>
Scalar max_parameter_error(const SimilarityTransform<Scalar>& a, const SimilarityTransform<Scalar>& b) {
  using std::abs;
  Scalar err = abs(a.scale - b.scale);
  err = std::max(err, (a.rotation - b.rotation).cwiseAbs().maxCoeff());
  err = std::max(err, (a.translation - b.translation).cwiseAbs().maxCoeff());
  return err;
}

PointCloud transformed(const PointCloud& cloud, const Sim3d& transform, std::string frame_label = {});

PointCloud concatenate(const PointCloud& a, const PointCloud& b);

/// Subset of points by index, colors carried.
PointCloud select(const PointCloud& cloud, const std::vector<Eigen::Index>& indices);

double bounding_box_diagonal(const PointCloud& cloud);

/// 0.01 × bounding-box diagonal; 1.0 for clouds with zero extent.
double default_voxel_size(const PointCloud& cloud);

struct VoxelKey {
  std::int64_t x, y, z;
  bool operator==(const VoxelKey&) const = default;
  auto operator<=>(const VoxelKey&) const = default;
};

VoxelKey voxel_of(const Vec3& p, double voxel);

/// Sorted, unique occupied voxels.
std::vector<VoxelKey> occupied_voxels(const PointCloud& cloud, double voxel);

/// One point per occupied voxel: centroid position, mean color. Output order is
/// the order in which each voxel is first touched in the input.
PointCloud voxel_downsample(const PointCloud& cloud, double voxel);

/// Transform b into a's frame, concatenate, then voxel-downsample.
PointCloud merge(const PointCloud& a, const PointCloud& b, const Sim3d& transform_b_to_a, double voxel);

}  // namespace geomem
