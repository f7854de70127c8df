#include "support.hpp"

#include "geomem/alignment.hpp"
#include "geomem/errors.hpp"
#include "geomem/io.hpp"
#include "geomem/nn_index.hpp"

#include <Eigen/Geometry>
#include <doctest.h>

#include <set>

using namespace geomem;
using namespace gmtest;

namespace {

Mat3 rot_z(double deg) { return Eigen::AngleAxisd(deg_to_rad(deg), Vec3::UnitZ()).toRotationMatrix(); }

Mat3 small_rotation(const Vec3& w) {
  const double a = w.norm();
  if (a == 0.0) return Mat3::Identity();
  return Eigen::AngleAxisd(a, w / a).toRotationMatrix();
}

/// Points on the surface of a unit-ish blob so nearest neighbors are well defined.
Points3 surface_points(Rng& rng, Eigen::Index n) {
  Points3 p(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vec3 d(normal(rng), normal(rng), normal(rng));
    d.normalize();
    const double r = 1.0 + 0.3 * std::sin(3.0 * d.x()) * std::cos(2.0 * d.y()) + 0.2 * d.z();
    p.col(i) = r * Vec3(1.5 * d.x(), d.y(), 0.7 * d.z());
  }
  return p;
}

}  // namespace

// ------------------------------------------------------------ umeyama

TEST_CASE("umeyama: identity and the known 2.5 Rz(30) case") {
  Rng rng(21);
  const Points3 src = random_points(rng, 100, 3.0);
  const Sim3d id = geomem::umeyama(src, src);
  CHECK(max_parameter_error(id, Sim3d::identity()) < 1e-12);

  Sim3d truth;
  truth.scale = 2.5;
  truth.rotation = rot_z(30.0);
  truth.translation = Vec3(1, 0, -2);
  const Sim3d got = geomem::umeyama(src, truth.apply(src));
  CHECK(max_parameter_error(got, truth) < 1e-9);
}

TEST_CASE("umeyama recovers 100 random similarities within 1e-9") {
  Rng rng(22);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Points3 src = random_points(rng, 100, 2.0);
    const Sim3d truth = random_similarity(rng);
    worst = std::max(worst, max_parameter_error(geomem::umeyama(src, truth.apply(src)), truth));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("umeyama agrees with Eigen's implementation") {
  Rng rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const Points3 src = random_points(rng, 50);
    Points3 dst = random_similarity(rng).apply(src);
    for (Eigen::Index i = 0; i < dst.cols(); ++i) dst.col(i) += 0.05 * Vec3(normal(rng), normal(rng), normal(rng));
    const Sim3d ours = geomem::umeyama(src, dst);
    const Eigen::Matrix4d ref = Eigen::umeyama(src, dst, true);
    CHECK((ours.matrix() - ref).cwiseAbs().maxCoeff() < 1e-9);
    const Sim3d rigid = geomem::umeyama(src, dst, false);
    const Eigen::Matrix4d ref_rigid = Eigen::umeyama(src, dst, false);
    CHECK((rigid.matrix() - ref_rigid).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(rigid.scale == 1.0);
  }
}

TEST_CASE("umeyama residual is a global minimum") {
  Rng rng(24);
  for (int trial = 0; trial < 10; ++trial) {
    const Points3 src = random_points(rng, 60);
    Points3 dst = random_similarity(rng, 0.5, 2.0).apply(src);
    for (Eigen::Index i = 0; i < dst.cols(); ++i) dst.col(i) += 0.01 * Vec3(normal(rng), normal(rng), normal(rng));
    const Sim3d best = geomem::umeyama(src, dst);
    const double r0 = alignment_rms(src, dst, best);
    for (int k = 0; k < 200; ++k) {
      Sim3d p = best;
      const double mag = std::pow(10.0, uniform(rng, -6.0, -1.0));
      p.scale *= std::exp(mag * normal(rng));
      p.rotation = small_rotation(mag * Vec3(normal(rng), normal(rng), normal(rng))) * p.rotation;
      p.translation += mag * Vec3(normal(rng), normal(rng), normal(rng));
      CHECK(alignment_rms(src, dst, p) >= r0 - 1e-15);
    }
  }
}

TEST_CASE("umeyama on noisy pairs beats a coarse grid search over (s, R, t)") {
  Rng rng(25);
  const Points3 src = random_points(rng, 100);
  Sim3d truth;
  truth.scale = 1.3;
  truth.rotation = rot_z(20.0);
  truth.translation = Vec3(0.5, -0.2, 0.1);
  Points3 dst = truth.apply(src);
  for (Eigen::Index i = 0; i < dst.cols(); ++i) dst.col(i) += 0.01 * Vec3(normal(rng), normal(rng), normal(rng));
  const double ours = alignment_rms(src, dst, geomem::umeyama(src, dst));

  // grid around the truth: 5 values per axis over scale, rotation vector and translation
  double grid_best = std::numeric_limits<double>::infinity();
  const double steps[5] = {-2, -1, 0, 1, 2};
  for (double ds : steps)
    for (double wx : steps)
      for (double wy : steps)
        for (double wz : steps)
          for (double tx : steps)
            for (double ty : steps)
              for (double tz : steps) {
                Sim3d g;
                g.scale = truth.scale * (1.0 + 0.005 * ds);
                g.rotation = small_rotation(0.003 * Vec3(wx, wy, wz)) * truth.rotation;
                g.translation = truth.translation + 0.003 * Vec3(tx, ty, tz);
                grid_best = std::min(grid_best, alignment_rms(src, dst, g));
              }
  CHECK(ours <= grid_best);
}

TEST_CASE("umeyama rejects degenerate correspondences") {
  Points3 two(3, 2);
  two << 0, 1, 0, 0, 0, 0;
  CHECK_THROWS_AS(geomem::umeyama(two, two), DegenerateInputError);
  Points3 line(3, 10);
  for (int i = 0; i < 10; ++i) line.col(i) = Vec3(i, 2.0 * i, -1.0 * i);
  CHECK_THROWS_AS(geomem::umeyama(line, line), DegenerateInputError);
  const Points3 same = Points3::Ones(3, 5);
  CHECK_THROWS_AS(geomem::umeyama(same, same), DegenerateInputError);
  CHECK_THROWS_AS(geomem::umeyama(Points3(3, 4), Points3(3, 5)), InputError);
}

// ------------------------------------------------------------ icp

TEST_CASE("icp: identical clouds converge immediately") {
  Rng rng(26);
  const PointCloud gt(surface_points(rng, 500));
  const IcpResult r = icp_scale_refine(gt, gt, Sim3d::identity());
  CHECK(max_parameter_error(r.transform, Sim3d::identity()) < 1e-12);
  CHECK(r.iterations == 1);
  CHECK(r.residuals.front() == 0.0);
  CHECK(r.converged);
}

TEST_CASE("icp recovers a 0.8 scale perturbation") {
  Rng rng(27);
  const Points3 g = surface_points(rng, 2000);
  const PointCloud gt(g);
  const PointCloud pred(Points3(0.8 * g));
  IcpOptions opt;
  opt.max_iters = 50;
  const IcpResult r = icp_scale_refine(pred, gt, Sim3d::identity(), opt);
  CHECK(r.iterations <= 50);
  CHECK(std::abs(r.transform.scale - 1.25) < 1e-3);
  for (std::size_t i = 1; i < r.residuals.size(); ++i) CHECK(r.residuals[i] <= r.residuals[i - 1] + 1e-12);
}

TEST_CASE("icp with trimming ignores 10% far outliers") {
  Rng rng(28);
  const Points3 g = surface_points(rng, 1000);
  Points3 p(3, 1100);
  p.leftCols(1000) = g;
  for (int i = 0; i < 100; ++i) {
    Vec3 d(normal(rng), normal(rng), normal(rng));
    p.col(1000 + i) = 6.0 * d.normalized();
  }
  const IcpResult r = icp_scale_refine(PointCloud(p), PointCloud(g), Sim3d::identity());
  CHECK(max_parameter_error(r.transform, Sim3d::identity()) < 1e-2);

  IcpOptions no_trim;
  no_trim.keep_fraction.reset();
  const IcpResult raw = icp_scale_refine(PointCloud(p), PointCloud(g), Sim3d::identity(), no_trim);
  CHECK(max_parameter_error(raw.transform, Sim3d::identity()) > max_parameter_error(r.transform, Sim3d::identity()));
}

TEST_CASE("icp residuals never increase") {
  Rng rng(29);
  for (int trial = 0; trial < 8; ++trial) {
    const Points3 g = surface_points(rng, 600);
    Sim3d perturb;
    perturb.scale = uniform(rng, 0.7, 1.3);
    perturb.rotation = small_rotation(0.1 * Vec3(normal(rng), normal(rng), normal(rng)));
    perturb.translation = 0.1 * random_vec(rng);
    Points3 p = perturb.apply(g);
    for (Eigen::Index i = 0; i < p.cols(); ++i) p.col(i) += 0.01 * Vec3(normal(rng), normal(rng), normal(rng));
    for (const bool trim : {true, false}) {
      IcpOptions opt;
      if (!trim) opt.keep_fraction.reset();
      const IcpResult r = icp_scale_refine(PointCloud(p), PointCloud(g), Sim3d::identity(), opt);
      REQUIRE(!r.residuals.empty());
      for (std::size_t i = 1; i < r.residuals.size(); ++i) CHECK(r.residuals[i] <= r.residuals[i - 1] + 1e-12);
    }
  }
}

TEST_CASE("icp rejects empty clouds") {
  const PointCloud empty;
  const PointCloud one(Points3::Zero(3, 4));
  CHECK_THROWS_AS(icp_scale_refine(empty, one, Sim3d::identity()), InputError);
  CHECK_THROWS_AS(icp_scale_refine(one, empty, Sim3d::identity()), InputError);
}

// ------------------------------------------------------------ anchor alignment

TEST_CASE("align_by_anchor") {
  Rng rng(30);
  const Points3 anchor = random_points(rng, 400, 3.0);
  IndexPairs pairs;
  for (Eigen::Index i = 0; i < anchor.cols(); ++i) pairs.emplace_back(i, i);

  const Sim3d id = align_by_anchor(PointCloud(anchor), PointCloud(anchor), pairs);
  CHECK(max_parameter_error(id, Sim3d::identity()) < 1e-9);

  const Sim3d truth = random_similarity(rng);
  const PointCloud pred(truth.inverse().apply(anchor));
  const Sim3d got = align_by_anchor(pred, PointCloud(anchor), pairs);
  CHECK(max_parameter_error(got, truth) < 1e-9);

  IndexPairs kept;
  for (const auto& pr : pairs) {
    if (uniform(rng, 0.0, 1.0) >= 0.05) kept.push_back(pr);
  }
  CHECK(kept.size() < pairs.size());
  CHECK(max_parameter_error(align_by_anchor(pred, PointCloud(anchor), kept), got) < 1e-6);

  CHECK_THROWS_AS(align_by_anchor(pred, PointCloud(anchor), IndexPairs{{0, 0}, {1, 1}}), DegenerateInputError);
  CHECK_THROWS_AS(align_by_anchor(pred, PointCloud(anchor), IndexPairs{{0, 0}, {1, 1}, {2, 9999}}), InputError);
}

TEST_CASE("match_pixel_indices intersects sorted lists") {
  const std::vector<Eigen::Index> a = {1, 3, 4, 8, 10};
  const std::vector<Eigen::Index> b = {0, 3, 8, 9, 10, 12};
  const IndexPairs m = match_pixel_indices(a, b);
  REQUIRE(m.size() == 3);
  CHECK(m[0] == std::make_pair(Eigen::Index(1), Eigen::Index(1)));
  CHECK(m[1] == std::make_pair(Eigen::Index(3), Eigen::Index(2)));
  CHECK(m[2] == std::make_pair(Eigen::Index(4), Eigen::Index(4)));
}

// ------------------------------------------------------------ nn index

TEST_CASE("k-d tree agrees exactly with brute force") {
  Rng rng(31);
  for (const Eigen::Index n : {Eigen::Index(1), Eigen::Index(7), Eigen::Index(100), Eigen::Index(2000)}) {
    Points3 pts = random_points(rng, n, 2.0);
    if (n > 10) pts.col(5) = pts.col(3);  // exact duplicate exercises tie-breaking
    const KdTree tree(pts, 8);
    const Points3 queries = random_points(rng, 300, 2.5);
    const Eigen::VectorXd brute = brute_nearest_sq(queries, pts);
    for (Eigen::Index q = 0; q < queries.cols(); ++q) {
      const Neighbor nb = tree.nearest(queries.col(q));
      CHECK(nb.squared_distance == brute(q));
      Eigen::Index lowest = -1;
      for (Eigen::Index j = 0; j < n; ++j) {
        if ((queries.col(q) - pts.col(j)).squaredNorm() == brute(q)) {
          lowest = j;
          break;
        }
      }
      CHECK(nb.index == lowest);

      const double radius = 0.6;
      std::vector<Eigen::Index> expect;
      for (Eigen::Index j = 0; j < n; ++j) {
        if ((queries.col(q) - pts.col(j)).squaredNorm() <= radius * radius) expect.push_back(j);
      }
      CHECK(tree.radius_search(queries.col(q), radius) == expect);
    }
    CHECK(tree.nearest_squared_distances(queries) == brute);
  }
  // a duplicated point queried exactly resolves to the lower index
  Points3 dup(3, 3);
  dup << 0, 1, 1, 0, 1, 1, 0, 1, 1;
  CHECK(KdTree(dup).nearest(Vec3(1, 1, 1)).index == 1);
  CHECK(KdTree(Points3(3, 0)).nearest(Vec3::Zero()).index == -1);
}

// ------------------------------------------------------------ voxels and merge

TEST_CASE("voxel downsample and merge") {
  Rng rng(32);
  const double voxel = 0.1;
  const Points3 pa = random_points(rng, 3000, 0.5);
  PointCloud a(pa);
  a.colors = Points3::Constant(3, pa.cols(), 0.25);

  SUBCASE("merge with empty equals downsample") {
    const PointCloud m = merge(a, PointCloud(), Sim3d::identity(), voxel);
    const PointCloud d = voxel_downsample(a, voxel);
    CHECK(m.positions == d.positions);
    CHECK(m.colors.has_value());
  }
  SUBCASE("merge with itself keeps occupancy") {
    const PointCloud m = merge(a, a, Sim3d::identity(), voxel);
    CHECK(m.size() == Eigen::Index(occupied_voxels(a, voxel).size()));
  }
  SUBCASE("disjoint cubes: bounded count and containment") {
    Sim3d shift;
    shift.translation = Vec3(5, 0, 0);
    const PointCloud b(random_points(rng, 2000, 0.5));
    const PointCloud m = merge(a, b, shift, voxel);
    CHECK(m.size() <= a.size() + b.size());
    const PointCloud all = concatenate(a, transformed(b, shift));
    const Eigen::VectorXd nn = brute_nearest_sq(m.positions, all.positions);
    CHECK(std::sqrt(nn.maxCoeff()) <= voxel * std::sqrt(3.0));
    // every output point is the centroid of the inputs in its voxel
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const VoxelKey key = voxel_of(m.positions.col(i), voxel);
      Vec3 sum = Vec3::Zero();
      int count = 0;
      for (Eigen::Index j = 0; j < all.size(); ++j) {
        if (voxel_of(all.positions.col(j), voxel) == key) {
          sum += all.positions.col(j);
          ++count;
        }
      }
      REQUIRE(count > 0);
      CHECK((sum / count - m.positions.col(i)).norm() < 1e-12);
    }
  }
  SUBCASE("deterministic") {
    CHECK(voxel_downsample(a, voxel).positions == voxel_downsample(a, voxel).positions);
    CHECK_THROWS_AS(voxel_downsample(a, 0.0), InputError);
  }
  CHECK(default_voxel_size(a) == doctest::Approx(0.01 * bounding_box_diagonal(a)));
  CHECK(default_voxel_size(PointCloud(Points3::Ones(3, 3))) == 1.0);
}

// ------------------------------------------------------------ io

TEST_CASE("PLY, PFM and PNG round trips") {
  Rng rng(33);
  const auto dir = scratch_dir("io");
  PointCloud cloud(random_points(rng, 50));
  Points3 col(3, 50);
  for (Eigen::Index i = 0; i < 50; ++i) col.col(i) = Vec3(uniform_int(rng, 0, 255), uniform_int(rng, 0, 255), uniform_int(rng, 0, 255)) / 255.0;
  cloud.colors = col;
  for (const bool binary : {true, false}) {
    const auto path = dir / (binary ? "b.ply" : "a.ply");
    io::write_ply(path, cloud, binary);
    const PointCloud back = io::read_ply(path);
    REQUIRE(back.size() == 50);
    CHECK((back.positions - cloud.positions).cwiseAbs().maxCoeff() < 1e-6);
    REQUIRE(back.colors.has_value());
    CHECK((*back.colors - col).cwiseAbs().maxCoeff() < 1e-9);
  }

  const DepthMap depth = random_depth(rng, 13, 7);
  io::write_pfm(dir / "d.pfm", depth);
  const DepthMap dback = io::read_depth(dir / "d.pfm");
  CHECK(dback.valid == depth.valid);
  for (int v = 0; v < 7; ++v)
    for (int u = 0; u < 13; ++u)
      if (depth.valid(v, u)) CHECK(std::abs(dback.values(v, u) - depth.values(v, u)) < 1e-5 * depth.values(v, u));

  io::write_raw_depth(dir / "d.raw", depth);
  CHECK(io::read_depth(dir / "d.raw").valid == depth.valid);

  RgbImage img(9, 5);
  for (int v = 0; v < 5; ++v)
    for (int u = 0; u < 9; ++u) img.set(u, v, Eigen::Vector3f(float(u) / 8.0f, float(v) / 4.0f, 0.5f));
  io::write_png(dir / "i.png", img);
  const RgbImage iback = io::read_png(dir / "i.png");
  CHECK(iback.width == 9);
  CHECK(iback.height == 5);
  CHECK((iback.pixels - img.pixels).cwiseAbs().maxCoeff() <= 0.5f / 255.0f + 1e-6f);

  Sim3d t = random_similarity(rng);
  const Sim3d tback = io::transform_from_json(io::transform_to_json(t));
  CHECK(max_parameter_error(t, tback) < 1e-12);

  std::vector<CameraView> views = {random_view(rng, 16, 12), random_view(rng, 16, 12)};
  io::write_cameras(dir / "cams.json", views);
  const auto vback = io::read_cameras(dir / "cams.json");
  REQUIRE(vback.size() == 2);
  CHECK((vback[1].pose.rotation - views[1].pose.rotation).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(vback[1].intrinsics.fx == views[1].intrinsics.fx);

  CHECK_THROWS_AS(io::read_ply(dir / "missing.ply"), InputError);
  std::ofstream(dir / "bad.pfm") << "P6\n";
  CHECK_THROWS_AS(io::read_pfm(dir / "bad.pfm"), InputError);
}
