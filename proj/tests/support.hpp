#pragma once

#include "geomem/geometry.hpp"
#include "geomem/memory.hpp"
#include "geomem/point_cloud.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

// Hand-rolled seeded generators and independent oracles shared by the tests.
namespace gmtest {

using geomem::CameraPose;
using geomem::CameraView;
using geomem::DepthGrid;
using geomem::DepthMap;
using geomem::Intrinsics;
using geomem::Mat3;
using geomem::PointCloud;
using geomem::Points3;
using geomem::Rng;
using geomem::Sim3d;
using geomem::Vec3;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
inline int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
inline double normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

/// Uniform rotation from a normalized Gaussian quaternion.
inline Mat3 random_rotation(Rng& rng) {
  Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
  q.normalize();
  return q.toRotationMatrix();
}

inline Vec3 random_vec(Rng& rng, double scale = 1.0) {
  return {uniform(rng, -scale, scale), uniform(rng, -scale, scale), uniform(rng, -scale, scale)};
}

inline Points3 random_points(Rng& rng, Eigen::Index n, double scale = 1.0) {
  Points3 p(3, n);
  for (Eigen::Index i = 0; i < n; ++i) p.col(i) = random_vec(rng, scale);
  return p;
}

inline Sim3d random_similarity(Rng& rng, double scale_lo = 0.2, double scale_hi = 5.0) {
  Sim3d t;
  t.scale = std::exp(uniform(rng, std::log(scale_lo), std::log(scale_hi)));
  t.rotation = random_rotation(rng);
  t.translation = random_vec(rng, 10.0);
  return t;
}

inline CameraPose random_pose(Rng& rng, double spread = 5.0) {
  CameraPose p;
  p.rotation = random_rotation(rng);
  p.translation = random_vec(rng, spread);
  return p;
}

/// Pinhole intrinsics with an off-center principal point.
inline Intrinsics random_intrinsics(Rng& rng, int w, int h) {
  Intrinsics k;
  k.width = w;
  k.height = h;
  k.fx = uniform(rng, 0.5, 1.5) * w;
  k.fy = k.fx * uniform(rng, 0.9, 1.1);
  k.cx = uniform(rng, 0.4, 0.6) * w;
  k.cy = uniform(rng, 0.4, 0.6) * h;
  return k;
}

inline CameraView random_view(Rng& rng, int w, int h) {
  CameraView v;
  v.intrinsics = random_intrinsics(rng, w, h);
  v.pose = random_pose(rng);
  return v;
}

/// Random positive depths with a fraction of invalid (NaN, zero or negative) pixels.
inline DepthMap random_depth(Rng& rng, int w, int h, double invalid_fraction = 0.1) {
  DepthGrid d(h, w);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const double r = uniform(rng, 0.0, 1.0);
      if (r < invalid_fraction / 3) d(v, u) = std::numeric_limits<double>::quiet_NaN();
      else if (r < 2 * invalid_fraction / 3) d(v, u) = 0.0;
      else if (r < invalid_fraction) d(v, u) = -1.0;
      else d(v, u) = uniform(rng, 0.5, 20.0);
    }
  }
  return DepthMap(d);
}

/// Squared distance from each column of a to its nearest column of b, by exhaustive search.
inline Eigen::VectorXd brute_nearest_sq(const Points3& a, const Points3& b) {
  Eigen::VectorXd out(a.cols());
  for (Eigen::Index i = 0; i < a.cols(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < b.cols(); ++j) best = std::min(best, (a.col(i) - b.col(j)).squaredNorm());
    out(i) = best;
  }
  return out;
}

/// Unique scratch directory under the system temp dir, emptied on creation.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("geomem_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Exact 2-Wasserstein distance between two equal-size empirical measures
/// (Hungarian assignment on squared Euclidean costs, O(n³)).
inline double exact_w2(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const int n = static_cast<int>(a.cols());
  std::vector<std::vector<double>> cost(std::size_t(n) + 1, std::vector<double>(std::size_t(n) + 1, 0.0));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) cost[std::size_t(i) + 1][std::size_t(j) + 1] = (a.col(i) - b.col(j)).squaredNorm();
  }
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(std::size_t(n) + 1, 0.0), v(std::size_t(n) + 1, 0.0);
  std::vector<int> match(std::size_t(n) + 1, 0), way(std::size_t(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(std::size_t(n) + 1, inf);
    std::vector<char> used(std::size_t(n) + 1, 0);
    do {
      used[std::size_t(j0)] = 1;
      const int i0 = match[std::size_t(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[std::size_t(j)]) continue;
        const double cur = cost[std::size_t(i0)][std::size_t(j)] - u[std::size_t(i0)] - v[std::size_t(j)];
        if (cur < minv[std::size_t(j)]) {
          minv[std::size_t(j)] = cur;
          way[std::size_t(j)] = j0;
        }
        if (minv[std::size_t(j)] < delta) {
          delta = minv[std::size_t(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[std::size_t(j)]) {
          u[std::size_t(match[std::size_t(j)])] += delta;
          v[std::size_t(j)] -= delta;
        } else {
          minv[std::size_t(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[std::size_t(j0)] != 0);
    do {
      const int j1 = way[std::size_t(j0)];
      match[std::size_t(j0)] = match[std::size_t(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (int j = 1; j <= n; ++j) total += cost[std::size_t(match[std::size_t(j)])][std::size_t(j)];
  return std::sqrt(total / n);
}

/// Sliced 2-Wasserstein distance in 2-D over `directions` evenly spaced
/// projections (each 1-D distance from sorted samples).
inline double sliced_w2(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, int directions = 64) {
  double total = 0.0;
  for (int l = 0; l < directions; ++l) {
    const double th = std::numbers::pi * l / directions;
    const Eigen::Vector2d d(std::cos(th), std::sin(th));
    Eigen::VectorXd pa = a.transpose() * d, pb = b.transpose() * d;
    std::sort(pa.data(), pa.data() + pa.size());
    std::sort(pb.data(), pb.data() + pb.size());
    total += (pa - pb).squaredNorm() / double(pa.size());
  }
  return std::sqrt(total / directions);
}

}  // namespace gmtest
