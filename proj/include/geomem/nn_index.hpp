#pragma once

#include "geomem/point_cloud.hpp"

#include <vector>

namespace geomem {

struct Neighbor {
  Eigen::Index index = -1;
  double squared_distance = 0.0;
};

/// Exact k-d tree over a fixed 3-D point set. Immutable after construction, so
/// concurrent queries are safe. Distance ties resolve to the lowest point index.
class KdTree {
 public:
  explicit KdTree(const Points3& points, int leaf_size = 16);

  Eigen::Index size() const { return points_.cols(); }

  /// Nearest point; index -1 when the tree is empty.
  Neighbor nearest(const Vec3& query) const;

  /// All points with squared distance <= radius², sorted by index.
  std::vector<Eigen::Index> radius_search(const Vec3& query, double radius) const;

  /// Nearest squared distance for every column of queries (+inf when the tree is empty).
  Eigen::VectorXd nearest_squared_distances(const Points3& queries) const;

 private:
  struct Node {
    Eigen::Index begin = 0;
    Eigen::Index end = 0;
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    int left = -1;
    int right = -1;
  };

  int build(Eigen::Index begin, Eigen::Index end);
  void nearest_impl(int node, const Vec3& q, Neighbor& best) const;
  void radius_impl(int node, const Vec3& q, double r2, std::vector<Eigen::Index>& out) const;

  Points3 points_;
  std::vector<Eigen::Index> order_;
  std::vector<Node> nodes_;
  int leaf_size_;
};

}  // namespace geomem
