#include "geomem/nn_index.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace geomem {

namespace {

inline double squared_distance(const Points3& pts, Eigen::Index i, const Vec3& q) {
  const double dx = pts(0, i) - q.x();
  const double dy = pts(1, i) - q.y();
  const double dz = pts(2, i) - q.z();
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace

KdTree::KdTree(const Points3& points, int leaf_size) : points_(points), leaf_size_(std::max(1, leaf_size)) {
  order_.resize(static_cast<std::size_t>(points_.cols()));
  std::iota(order_.begin(), order_.end(), Eigen::Index(0));
  if (points_.cols() > 0) {
    nodes_.reserve(static_cast<std::size_t>(2 * points_.cols() / leaf_size_ + 2));
    build(0, points_.cols());
  }
}

int KdTree::build(Eigen::Index begin, Eigen::Index end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({begin, end});
  if (end - begin <= leaf_size_) return id;

  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (Eigen::Index i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_.col(order_[std::size_t(i)]));
    hi = hi.cwiseMax(points_.col(order_[std::size_t(i)]));
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] - lo[axis] <= 0.0) return id;  // all coincident: keep as a leaf

  const Eigen::Index mid = begin + (end - begin) / 2;
  auto first = order_.begin() + begin;
  std::nth_element(first, order_.begin() + mid, order_.begin() + end,
                   [&](Eigen::Index a, Eigen::Index b) { return points_(axis, a) < points_(axis, b); });
  const double split = points_(axis, order_[std::size_t(mid)]);

  const int left = build(begin, mid);
  const int right = build(mid, end);
  Node& node = nodes_[std::size_t(id)];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

void KdTree::nearest_impl(int node_id, const Vec3& q, Neighbor& best) const {
  const Node& node = nodes_[std::size_t(node_id)];
  if (node.axis < 0) {
    for (Eigen::Index i = node.begin; i < node.end; ++i) {
      const Eigen::Index idx = order_[std::size_t(i)];
      const double d = squared_distance(points_, idx, q);
      if (d < best.squared_distance || (d == best.squared_distance && idx < best.index)) best = {idx, d};
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const int near_child = diff < 0.0 ? node.left : node.right;
  const int far_child = diff < 0.0 ? node.right : node.left;
  nearest_impl(near_child, q, best);
  // <= keeps equidistant candidates with lower indices reachable
  if (diff * diff <= best.squared_distance) nearest_impl(far_child, q, best);
}

Neighbor KdTree::nearest(const Vec3& query) const {
  Neighbor best{-1, std::numeric_limits<double>::infinity()};
  if (!nodes_.empty()) nearest_impl(0, query, best);
  return best;
}

void KdTree::radius_impl(int node_id, const Vec3& q, double r2, std::vector<Eigen::Index>& out) const {
  const Node& node = nodes_[std::size_t(node_id)];
  if (node.axis < 0) {
    for (Eigen::Index i = node.begin; i < node.end; ++i) {
      const Eigen::Index idx = order_[std::size_t(i)];
      if (squared_distance(points_, idx, q) <= r2) out.push_back(idx);
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const int near_child = diff < 0.0 ? node.left : node.right;
  const int far_child = diff < 0.0 ? node.right : node.left;
  radius_impl(near_child, q, r2, out);
  if (diff * diff <= r2) radius_impl(far_child, q, r2, out);
}

std::vector<Eigen::Index> KdTree::radius_search(const Vec3& query, double radius) const {
  std::vector<Eigen::Index> out;
  if (!nodes_.empty() && radius >= 0.0) radius_impl(0, query, radius * radius, out);
  std::sort(out.begin(), out.end());
  return out;
}

Eigen::VectorXd KdTree::nearest_squared_distances(const Points3& queries) const {
  Eigen::VectorXd d(queries.cols());
  for (Eigen::Index i = 0; i < queries.cols(); ++i) d[i] = nearest(queries.col(i)).squared_distance;
  return d;
}

}  // namespace geomem
