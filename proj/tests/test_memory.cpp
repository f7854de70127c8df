#include "support.hpp"

#include "geomem/errors.hpp"
#include "geomem/memory.hpp"
#include "geomem/nn_index.hpp"

#include <doctest.h>

#include <functional>
#include <set>

using namespace geomem;
using namespace gmtest;

namespace {

std::vector<Frame> numbered_frames(int n, int first_id = 0) {
  std::vector<Frame> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[std::size_t(i)].view.frame_id = first_id + i;
  return out;
}

/// Uniform samples on a sphere of the given radius.
Points3 sphere_points(Rng& rng, Eigen::Index n, double radius) {
  Points3 p(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vec3 d(normal(rng), normal(rng), normal(rng));
    p.col(i) = radius * d.normalized();
  }
  return p;
}

Points3 columns_where(const Points3& p, const std::function<bool(const Vec3&)>& keep) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < p.cols(); ++i)
    if (keep(p.col(i))) idx.push_back(i);
  Points3 out(3, Eigen::Index(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.col(Eigen::Index(k)) = p.col(idx[k]);
  return out;
}

}  // namespace

// ------------------------------------------------------------ bank

TEST_CASE("bank_insert keeps every stride-th generated frame") {
  MemoryBank bank;
  bank.stride = 8;
  const MemoryBank out = bank_insert(bank, numbered_frames(81), SourceTag::Generated);
  // enumeration oracle: positions 0, 8, ..., 80
  std::vector<int> expect;
  for (int i = 0; i < 81; ++i)
    if (i % 8 == 0) expect.push_back(i);
  REQUIRE(out.size() == expect.size());
  CHECK(out.size() == 11);
  for (std::size_t i = 0; i < expect.size(); ++i) CHECK(out.entries[i].view().frame_id == expect[i]);

  for (int stride = 1; stride <= 12; ++stride) {
    for (int n : {1, 7, 16, 33}) {
      MemoryBank b;
      b.stride = stride;
      CHECK(bank_insert(b, numbered_frames(n), SourceTag::Generated).size() == std::size_t((n + stride - 1) / stride));
    }
  }

  CHECK(bank_insert(bank, {}, SourceTag::Generated).size() == 0);
}

TEST_CASE("initial and panorama frames ignore the stride") {
  for (int stride : {1, 3, 8, 100}) {
    MemoryBank bank;
    bank.stride = stride;
    const MemoryBank p = bank_insert(bank, numbered_frames(27), SourceTag::Panorama);
    CHECK(p.size() == 27);
    CHECK(p.count(SourceTag::Panorama) == 27);
    const MemoryBank q = bank_insert(p, numbered_frames(1), SourceTag::Initial);
    CHECK(q.count(SourceTag::Initial) == 1);
  }
}

TEST_CASE("bank_insert rejects duplicates and leaves the bank untouched") {
  MemoryBank bank;
  bank = bank_insert(bank, numbered_frames(9), SourceTag::Generated);
  const std::size_t before = bank.size();
  CHECK_THROWS_AS(bank_insert(bank, numbered_frames(1), SourceTag::Generated), DuplicateError);
  CHECK(bank.size() == before);
  // same id under another tag is fine
  CHECK(bank_insert(bank, numbered_frames(1), SourceTag::Panorama).size() == before + 1);
  std::vector<Frame> twice = numbered_frames(2, 100);
  twice[1].view.frame_id = 100;
  CHECK_THROWS_AS(bank_insert(MemoryBank{}, twice, SourceTag::Panorama), DuplicateError);
  MemoryBank bad;
  bad.stride = 0;
  CHECK_THROWS_AS(bank_insert(bad, numbered_frames(3), SourceTag::Generated), InputError);
}

// ------------------------------------------------------------ cache

TEST_CASE("cache_update: first insertion, idempotent reinsertion, failures") {
  Rng rng(41);
  const PointCloud cloud(random_points(rng, 2000));
  const Cache3D c1 = cache_update(Cache3D{}, cloud, {});
  CHECK(c1.generation == 1);
  CHECK(c1.global_cloud.positions == voxel_downsample(cloud, c1.voxel).positions);

  OverlapPairs self;
  self.source = cloud.positions;
  self.target = cloud.positions;
  const Cache3D c2 = cache_update(c1, cloud, self);
  CHECK(c2.generation == 2);
  CHECK(occupied_voxels(c2.global_cloud, c2.voxel) == occupied_voxels(c1.global_cloud, c1.voxel));

  OverlapPairs few;
  few.source = cloud.positions.leftCols(2);
  few.target = cloud.positions.leftCols(2);
  CHECK_THROWS_AS(cache_update(c1, cloud, few), AlignmentError);
  OverlapPairs line;
  line.source = Points3(3, 5);
  for (int i = 0; i < 5; ++i) line.source.col(i) = Vec3(i, i, i);
  line.target = line.source;
  CHECK_THROWS_AS(cache_update(c1, cloud, line), AlignmentError);
  CHECK(c1.generation == 1);
}

TEST_CASE("two half-scans of a sphere merge into a full cover") {
  Rng rng(42);
  const double radius = 2.0;
  const Points3 surface = sphere_points(rng, 40000, radius);
  // scan A in world coordinates, scan B in an unrelated frame
  const Points3 a = columns_where(surface, [](const Vec3& p) { return p.x() < 0.3; });
  const Points3 b_world = columns_where(surface, [](const Vec3& p) { return p.x() > -0.3; });
  const Sim3d world_to_b = random_similarity(rng, 0.5, 2.0);
  const Points3 b = world_to_b.apply(b_world);

  Cache3D cache;
  cache.voxel = 0.1;
  cache = cache_update(cache, PointCloud(a), {});
  OverlapPairs pairs;
  pairs.target = columns_where(a, [](const Vec3& p) { return p.x() > -0.3; });
  pairs.source = world_to_b.apply(pairs.target);
  std::vector<CameraView> views(1);
  cache = cache_update(cache, PointCloud(b), pairs, views);
  CHECK(cache.generation == 2);
  CHECK(max_parameter_error(cache.last_alignment, world_to_b.inverse()) < 1e-9);
  CHECK((cache.contributing_views[0].pose.center() - world_to_b.inverse().translation).norm() < 1e-9);

  const auto truth = occupied_voxels(PointCloud(surface), cache.voxel);
  const auto got = occupied_voxels(cache.global_cloud, cache.voxel);
  std::vector<VoxelKey> hit;
  std::set_intersection(truth.begin(), truth.end(), got.begin(), got.end(), std::back_inserter(hit));
  CHECK(double(hit.size()) / double(truth.size()) >= 0.95);
}

TEST_CASE("five noisy incremental updates stay within 3 voxels of the surface") {
  Rng rng(43);
  const double radius = 3.0;
  Cache3D cache;
  cache.voxel = 0.1;
  const Vec3 axes[5] = {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(-1, 0, 0), Vec3(0, -1, 0), Vec3(0, 0, 1)};
  for (int k = 0; k < 5; ++k) {
    const Points3 patch =
        columns_where(sphere_points(rng, 8000, radius), [&](const Vec3& p) { return p.normalized().dot(axes[k]) > 0.0; });
    const Sim3d world_to_local = k == 0 ? Sim3d::identity() : random_similarity(rng, 0.5, 2.0);
    Points3 local = world_to_local.apply(patch);
    for (Eigen::Index i = 0; i < local.cols(); ++i)
      local.col(i) += 0.005 * world_to_local.scale * Vec3(normal(rng), normal(rng), normal(rng));
    OverlapPairs pairs;
    if (k > 0) {
      // pairs from the part of the patch the cache already saw
      const Points3 shared = columns_where(patch, [&](const Vec3& p) {
        for (int j = 0; j < k; ++j)
          if (p.normalized().dot(axes[j]) > 0.0) return true;
        return false;
      });
      pairs.target = shared;
      pairs.source = world_to_local.apply(shared);
      for (Eigen::Index i = 0; i < pairs.source.cols(); ++i)
        pairs.source.col(i) += 0.005 * world_to_local.scale * Vec3(normal(rng), normal(rng), normal(rng));
    }
    cache = cache_update(cache, PointCloud(local), pairs);
    CHECK(cache.generation == k + 1);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < cache.global_cloud.size(); ++i)
      worst = std::max(worst, std::abs(cache.global_cloud.positions.col(i).norm() - radius));
    CHECK(worst <= 3.0 * cache.voxel);
  }
}

// ------------------------------------------------------------ ggm

TEST_CASE("assemble_ggm") {
  Rng rng(44);
  const PointCloud reference(random_points(rng, 500));
  SUBCASE("empty cache") {
    const GGMCondition g = assemble_ggm(reference, Cache3D{}, Sim3d::identity());
    CHECK(g.combined.positions == reference.positions);
    CHECK(g.auxiliary_points.empty());
  }
  SUBCASE("cache equal to reference dedups to nothing") {
    Cache3D c;
    c.voxel = 0.05;
    c.global_cloud = reference;
    c.generation = 1;
    const GGMCondition g = assemble_ggm(reference, c, Sim3d::identity());
    CHECK(g.auxiliary_points.empty());
    CHECK(g.combined.positions == reference.positions);
  }
  SUBCASE("reference plus disjoint block leaves the block") {
    const Points3 block = (random_points(rng, 300, 0.5).colwise() + Vec3(5, 0, 0)).eval();
    Cache3D c;
    c.voxel = 0.05;
    c.generation = 1;
    c.global_cloud = PointCloud(concatenate(reference, PointCloud(block)).positions);
    // cache frame differs from the reference frame by a known similarity
    const Sim3d ref_to_cache = random_similarity(rng, 0.5, 2.0);
    c.global_cloud = transformed(c.global_cloud, ref_to_cache);
    c.voxel *= ref_to_cache.scale;
    const GGMCondition g = assemble_ggm(reference, c, ref_to_cache.inverse(), 0.05);
    REQUIRE(g.auxiliary_points.size() == 300);
    CHECK((g.auxiliary_points.positions - block).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(g.combined.size() == 800);
  }
  SUBCASE("reference is always a verbatim prefix") {
    for (int trial = 0; trial < 10; ++trial) {
      Cache3D c;
      c.voxel = uniform(rng, 0.01, 0.3);
      c.generation = 1;
      c.global_cloud = PointCloud(random_points(rng, uniform_int(rng, 0, 400), 1.5));
      const PointCloud ref(random_points(rng, uniform_int(rng, 1, 300)));
      const GGMCondition g = assemble_ggm(ref, c, random_similarity(rng));
      REQUIRE(g.combined.size() >= ref.size());
      CHECK(g.combined.positions.leftCols(ref.size()) == ref.positions);
      CHECK(g.combined.size() == ref.size() + g.auxiliary_points.size());
    }
  }
}

// ------------------------------------------------------------ masking

TEST_CASE("random pixel mask at p = 0.5 leaves exactly half") {
  Rng rng(45);
  DepthMap d(DepthGrid::Ones(64, 64));
  const MaskRecord r = apply_random_pixel_mask(d, 0.5, rng);
  CHECK(d.valid_count() == 2048);
  CHECK(r.masked_pixels == 2048);
  CHECK(r.realized_fraction == 0.5);
  // invalid pixels are never counted or chosen
  DepthGrid g = DepthGrid::Ones(10, 10);
  for (int i = 0; i < 20; ++i) g(0, 0 + i % 10) = 0.0, g(1, i % 10) = 0.0;
  DepthMap partial(g);
  apply_random_pixel_mask(partial, 0.5, rng);
  CHECK(partial.valid_count() == 40);
}

TEST_CASE("rectangle mask at a = 0.25 covers 2400 to 2600 pixels") {
  Rng rng(46);
  for (int trial = 0; trial < 200; ++trial) {
    DepthMap d(DepthGrid::Ones(100, 100));
    const MaskRecord r = apply_rectangle_mask(d, 0.25, rng);
    const Eigen::Index occluded = 10000 - d.valid_count();
    CHECK(occluded >= 2400);
    CHECK(occluded <= 2600);
    CHECK(r.masked_pixels == occluded);
    // the occluded set is one axis-aligned rectangle
    int u0 = 100, u1 = -1, v0 = 100, v1 = -1;
    for (int v = 0; v < 100; ++v)
      for (int u = 0; u < 100; ++u)
        if (!d.valid(v, u)) u0 = std::min(u0, u), u1 = std::max(u1, u), v0 = std::min(v0, v), v1 = std::max(v1, v);
    CHECK(Eigen::Index(u1 - u0 + 1) * (v1 - v0 + 1) == occluded);
  }
}

TEST_CASE("masking fractions over 1000 seeded draws") {
  const int H = 48, W = 64;
  double sum_p = 0.0, sum_a = 0.0;
  int n_p = 0, n_a = 0;
  int counts[5] = {0, 0, 0, 0, 0};
  Rng count_rng(47);
  for (int i = 0; i < 1000; ++i) ++counts[sample_aux_frame_count(count_rng)];
  CHECK(counts[0] == 0);
  for (int k = 1; k <= 4; ++k) CHECK(std::abs(counts[k] - 250) < 60);

  AuxFrame f;
  f.depth = DepthMap(DepthGrid::Constant(H, W, 2.0));
  f.view.intrinsics = Intrinsics::from_fov(60.0, 45.0, W, H);
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const AugmentResult r = ggm_train_augment({f}, seed);
    REQUIRE(r.records.size() == 1);
    const MaskRecord& m = r.records[0];
    CHECK(r.cloud.size() == Eigen::Index(H * W) - m.masked_pixels);
    if (m.kind == MaskKind::RandomPixels) {
      CHECK(m.realized_fraction >= 0.30);
      CHECK(m.realized_fraction <= 0.70);
      sum_p += m.realized_fraction;
      ++n_p;
    } else {
      CHECK(m.realized_fraction >= 0.20);
      CHECK(m.realized_fraction <= 0.70);
      sum_a += m.realized_fraction;
      ++n_a;
    }
  }
  CHECK(std::abs(n_p - 500) < 60);
  CHECK(std::abs(sum_p / n_p - 0.50) <= 0.03);
  CHECK(std::abs(sum_a / n_a - 0.45) <= 0.03);
}

TEST_CASE("ggm_train_augment is deterministic and maps into the reference frame") {
  Rng rng(48);
  std::vector<AuxFrame> frames;
  for (int i = 0; i < 3; ++i) frames.push_back({random_depth(rng, 16, 12, 0.0), random_view(rng, 16, 12)});
  AugmentOptions opt;
  opt.world_to_reference = random_similarity(rng);
  const AugmentResult a = ggm_train_augment(frames, 7, opt);
  const AugmentResult b = ggm_train_augment(frames, 7, opt);
  CHECK(a.cloud.positions == b.cloud.positions);
  CHECK(a.cloud.frame_label == "reference");
  // every survivor is the transformed back-projection of some aux pixel
  PointCloud all;
  for (const auto& f : frames) all = concatenate(all, transformed(backproject(f.depth, f.view), opt.world_to_reference));
  const Eigen::VectorXd nn = KdTree(all.positions).nearest_squared_distances(a.cloud.positions);
  CHECK(nn.maxCoeff() < 1e-18 * std::max(1.0, all.positions.squaredNorm()));
  CHECK_THROWS_AS(ggm_train_augment({}, 1), InputError);
  CHECK_THROWS_AS(ggm_train_augment(std::vector<AuxFrame>(5, frames[0]), 1), InputError);
}
