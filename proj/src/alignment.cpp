#include "geomem/alignment.hpp"

#include "geomem/nn_index.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace geomem {

double alignment_rms(const Points3& source, const Points3& target, const Sim3d& transform) {
  if (source.cols() == 0) return 0.0;
  return std::sqrt((transform.apply(source) - target).colwise().squaredNorm().mean());
}

IcpResult icp_scale_refine(const PointCloud& pred, const PointCloud& gt, const Sim3d& init, const IcpOptions& options) {
  if (pred.empty() || gt.empty()) throw InputError("icp_scale_refine: point clouds must be non-empty");
  if (!(init.scale > 0.0)) throw InputError("icp_scale_refine: initial scale must be positive");
  if (options.keep_fraction && !(*options.keep_fraction > 0.0 && *options.keep_fraction <= 1.0)) {
    throw InputError("icp_scale_refine: keep_fraction must be in (0, 1]");
  }

  const KdTree tree(gt.positions);
  const Eigen::Index n = pred.size();
  const Eigen::Index keep =
      options.keep_fraction ? std::max<Eigen::Index>(3, Eigen::Index(std::floor(*options.keep_fraction * n))) : n;

  IcpResult result;
  result.transform = init;
  std::vector<Eigen::Index> match(static_cast<std::size_t>(n));
  std::vector<double> dist(static_cast<std::size_t>(n));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));

  for (int it = 0; it < std::max(1, options.max_iters + 1); ++it) {
    const Points3 moved = result.transform.apply(pred.positions);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Neighbor nb = tree.nearest(moved.col(i));
      match[std::size_t(i)] = nb.index;
      dist[std::size_t(i)] = nb.squared_distance;
    }
    std::iota(order.begin(), order.end(), Eigen::Index(0));
    const auto by_distance = [&](Eigen::Index a, Eigen::Index b) {
      const double da = dist[std::size_t(a)], db = dist[std::size_t(b)];
      return da < db || (da == db && a < b);
    };
    const Eigen::Index kept = std::min(keep, n);
    if (kept < n) std::nth_element(order.begin(), order.begin() + kept, order.end(), by_distance);
    order.resize(static_cast<std::size_t>(kept));
    std::sort(order.begin(), order.end());

    double sum = 0.0;
    for (Eigen::Index i : order) sum += dist[std::size_t(i)];
    const double residual = std::sqrt(sum / double(kept));
    result.residuals.push_back(residual);
    result.iterations = it + 1;

    const std::size_t h = result.residuals.size();
    if (residual == 0.0 || (h >= 2 && std::abs(result.residuals[h - 2] - residual) < options.tol)) {
      result.converged = true;
      break;
    }
    if (it == options.max_iters) break;

    Points3 src(3, kept), dst(3, kept);
    for (Eigen::Index k = 0; k < kept; ++k) {
      const Eigen::Index i = order[std::size_t(k)];
      src.col(k) = pred.positions.col(i);
      dst.col(k) = gt.positions.col(match[std::size_t(i)]);
    }
    result.transform = geomem::umeyama(src, dst, options.with_scale);
    order.resize(static_cast<std::size_t>(n));
  }
  return result;
}

Sim3d align_by_anchor(const PointCloud& pred, const PointCloud& anchor, const IndexPairs& correspondences,
                      bool with_scale) {
  if (correspondences.size() < 3) {
    throw DegenerateInputError("align_by_anchor: need at least 3 correspondences");
  }
  const auto m = static_cast<Eigen::Index>(correspondences.size());
  Points3 src(3, m), dst(3, m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const auto [i, j] = correspondences[std::size_t(k)];
    if (i < 0 || i >= pred.size() || j < 0 || j >= anchor.size()) {
      throw InputError("align_by_anchor: correspondence index out of range");
    }
    src.col(k) = pred.positions.col(i);
    dst.col(k) = anchor.positions.col(j);
  }
  return geomem::umeyama(src, dst, with_scale);
}

Sim3d align_by_nearest_neighbors(const PointCloud& pred, const PointCloud& anchor, const Sim3d& init,
                                 const IcpOptions& options) {
  return icp_scale_refine(pred, anchor, init, options).transform;
}

IndexPairs match_pixel_indices(const std::vector<Eigen::Index>& pred_pixels,
                               const std::vector<Eigen::Index>& anchor_pixels) {
  IndexPairs pairs;
  std::size_t i = 0, j = 0;
  while (i < pred_pixels.size() && j < anchor_pixels.size()) {
    if (pred_pixels[i] < anchor_pixels[j]) {
      ++i;
    } else if (anchor_pixels[j] < pred_pixels[i]) {
      ++j;
    } else {
      pairs.emplace_back(Eigen::Index(i), Eigen::Index(j));
      ++i;
      ++j;
    }
  }
  return pairs;
}

}  // namespace geomem
