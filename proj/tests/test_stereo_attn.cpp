#include "support.hpp"

#include "geomem/errors.hpp"
#include "geomem/pair_sampler.hpp"
#include "geomem/stereo_attn.hpp"

#include <doctest.h>

#include <set>

using namespace geomem;
using namespace gmtest;

namespace {

FeatureGrid random_grid(Rng& rng, int f, int h, int w, int c, GridRole role = GridRole::Target) {
  FeatureGrid g(f, h, w, c, role);
  for (auto& x : g.data) x = normal(rng);
  return g;
}

StitchedPair random_pair(Rng& rng, int f, int h, int w, int c) {
  return stitch(random_grid(rng, f, h, w, c), random_grid(rng, f, h, w, c, GridRole::Reference),
                random_grid(rng, f, h, w, c, GridRole::PointmapTarget),
                random_grid(rng, f, h, w, c, GridRole::PointmapReference));
}

/// Naive dense attention over one frame's 2HW tokens, scalar loops only.
FeatureGrid naive_attention(const StitchedPair& p, const AttentionWeights& wts) {
  const FeatureGrid& x = p.ssm_input;
  const int L = x.height * x.width, C = x.channels;
  const int D = int(wts.query.cols()), Co = int(wts.value.cols());
  FeatureGrid out(x.frames, x.height, x.width / 2, Co, GridRole::Output);
  for (int f = 0; f < x.frames; ++f) {
    const auto nL = static_cast<std::size_t>(L);
    std::vector<std::vector<double>> q(nL, std::vector<double>(static_cast<std::size_t>(D)));
    std::vector<std::vector<double>> k = q;
    std::vector<std::vector<double>> v(nL, std::vector<double>(static_cast<std::size_t>(Co)));
    for (int t = 0; t < L; ++t) {
      const int h = t / x.width, w = t % x.width;
      for (int d = 0; d < D; ++d) {
        double sq = 0.0, sk = 0.0;
        for (int c = 0; c < C; ++c) sq += x.at(f, h, w, c) * wts.query(c, d), sk += x.at(f, h, w, c) * wts.key(c, d);
        q[std::size_t(t)][std::size_t(d)] = sq;
        k[std::size_t(t)][std::size_t(d)] = sk;
      }
      for (int o = 0; o < Co; ++o) {
        double sv = 0.0;
        for (int c = 0; c < C; ++c) sv += x.at(f, h, w, c) * wts.value(c, o);
        v[std::size_t(t)][std::size_t(o)] = sv;
      }
    }
    for (int t = 0; t < L; ++t) {
      const int h = t / x.width, w = t % x.width;
      if (w >= x.width / 2) continue;
      std::vector<double> s(nL);
      double m = -1e300;
      for (int u = 0; u < L; ++u) {
        double dot = 0.0;
        for (int d = 0; d < D; ++d) dot += q[std::size_t(t)][std::size_t(d)] * k[std::size_t(u)][std::size_t(d)];
        s[std::size_t(u)] = dot / std::sqrt(double(D));
        m = std::max(m, s[std::size_t(u)]);
      }
      double z = 0.0;
      for (auto& e : s) z += (e = std::exp(e - m));
      for (int o = 0; o < Co; ++o) {
        double acc = 0.0;
        for (int u = 0; u < L; ++u) acc += s[std::size_t(u)] * v[std::size_t(u)][std::size_t(o)];
        out.at(f, h, w, o) = acc / z;
      }
    }
  }
  return out;
}

double max_abs_diff(const FeatureGrid& a, const FeatureGrid& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace

// ------------------------------------------------------------ stitching

TEST_CASE("stitch layout cell by cell") {
  FeatureGrid zt(1, 2, 3, 1), zr(1, 2, 3, 1), pt(1, 2, 3, 1), pr(1, 2, 3, 1);
  for (int h = 0; h < 2; ++h) {
    for (int w = 0; w < 3; ++w) {
      zt.at(0, h, w, 0) = 100 + 10 * h + w;
      zr.at(0, h, w, 0) = 200 + 10 * h + w;
      pt.at(0, h, w, 0) = 0.1 * (h + 1);
      pr.at(0, h, w, 0) = 0.01 * (w + 1);
    }
  }
  const StitchedPair s = stitch(zt, zr, pt, pr);
  CHECK(s.stitched.width == 6);
  CHECK(s.ssm_input.height == 2);
  for (int h = 0; h < 2; ++h) {
    for (int w = 0; w < 6; ++w) {
      const double z = w < 3 ? 100 + 10 * h + w : 200 + 10 * h + (w - 3);
      const double p = w < 3 ? 0.1 * (h + 1) : 0.01 * (w - 3 + 1);
      CHECK(s.stitched.at(0, h, w, 0) == z);
      CHECK(s.pointmap_latent.at(0, h, w, 0) == p);
      CHECK(s.ssm_input.at(0, h, w, 0) == z + p);
    }
  }
  CHECK(s.stitched.role == GridRole::Stitched);
}

TEST_CASE("stitch with zero reference and pointmaps") {
  Rng rng(61);
  const FeatureGrid zt = random_grid(rng, 2, 3, 4, 5);
  const FeatureGrid zero = FeatureGrid::zeros_like(zt, GridRole::Reference);
  const StitchedPair s = stitch(zt, zero, zero, zero);
  for (int f = 0; f < 2; ++f)
    for (int h = 0; h < 3; ++h)
      for (int w = 0; w < 8; ++w)
        for (int c = 0; c < 5; ++c) CHECK(s.ssm_input.at(f, h, w, c) == (w < 4 ? zt.at(f, h, w, c) : 0.0));
  CHECK_THROWS_AS(stitch(zt, random_grid(rng, 2, 3, 4, 4), zero, zero), InputError);
  CHECK_THROWS_AS(stitch(zt, zero, random_grid(rng, 2, 3, 5, 5), zero), InputError);
}

// ------------------------------------------------------------ attention

TEST_CASE("attention matches the naive dense oracle for shapes up to F4 H8 W8 C16") {
  Rng rng(62);
  for (const int F : {1, 2, 4})
    for (const int H : {1, 2, 8})
      for (const int W : {1, 2, 8})
        for (const int C : {1, 4, 16}) {
          const AttentionWeights wts = AttentionWeights::random(C, std::max(1, C / 2), C, rng);
          std::vector<StitchedPair> pairs = {random_pair(rng, F, H, W, C), random_pair(rng, F, H, W, C)};
          const auto out = ssm_attention(pairs, wts);
          REQUIRE(out.size() == 2);
          for (std::size_t b = 0; b < 2; ++b) {
            CHECK(out[b].width == W);
            CHECK(max_abs_diff(out[b], naive_attention(pairs[b], wts)) < 1e-6);
          }
        }
}

TEST_CASE("uniform attention averages all 2HW value tokens") {
  Rng rng(63);
  const int F = 2, H = 3, W = 4, C = 5;
  AttentionWeights wts;
  wts.query = Eigen::MatrixXd::Zero(C, 3);
  wts.key = Eigen::MatrixXd::Zero(C, 3);
  wts.value = Eigen::MatrixXd::Identity(C, C);
  const StitchedPair p = random_pair(rng, F, H, W, C);
  const FeatureGrid out = ssm_attention({p}, wts)[0];
  for (int f = 0; f < F; ++f) {
    for (int c = 0; c < C; ++c) {
      double mean = 0.0;
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < 2 * W; ++w) mean += p.ssm_input.at(f, h, w, c);
      mean /= double(2 * H * W);
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) CHECK(std::abs(out.at(f, h, w, c) - mean) < 1e-12);
    }
  }
}

TEST_CASE("pairs are isolated: perturbation and finite differences") {
  Rng rng(64);
  const int F = 2, H = 3, W = 3, C = 4;
  const AttentionWeights wts = AttentionWeights::random(C, 4, C, rng);
  std::vector<StitchedPair> pairs = {random_pair(rng, F, H, W, C), random_pair(rng, F, H, W, C),
                                     random_pair(rng, F, H, W, C)};
  const auto base = ssm_attention(pairs, wts);

  auto perturbed = pairs;
  for (std::size_t i = 0; i < perturbed[1].ssm_input.data.size(); ++i) perturbed[1].ssm_input.data[i] += normal(rng);
  const auto moved = ssm_attention(perturbed, wts);
  CHECK(base[0].data == moved[0].data);
  CHECK(base[2].data == moved[2].data);
  CHECK(base[1].data != moved[1].data);

  // d(out of pair 0) / d(every input of pair 1) by central differences
  const double eps = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < pairs[1].ssm_input.data.size(); ++i) {
    auto plus = pairs, minus = pairs;
    plus[1].ssm_input.data[i] += eps;
    minus[1].ssm_input.data[i] -= eps;
    const auto a = ssm_attention(plus, wts), b = ssm_attention(minus, wts);
    for (std::size_t j = 0; j < a[0].data.size(); ++j) worst = std::max(worst, std::abs(a[0].data[j] - b[0].data[j]) / (2 * eps));
  }
  CHECK(worst < 1e-9);

  // frames within one pair are independent sequences too
  auto frame_moved = pairs;
  for (int h = 0; h < H; ++h)
    for (int w = 0; w < 2 * W; ++w)
      for (int c = 0; c < C; ++c) frame_moved[0].ssm_input.at(1, h, w, c) += 1.0;
  const auto fm = ssm_attention(frame_moved, wts);
  for (int h = 0; h < H; ++h)
    for (int w = 0; w < W; ++w)
      for (int c = 0; c < C; ++c) CHECK(fm[0].at(0, h, w, c) == base[0].at(0, h, w, c));
}

TEST_CASE("every reference token reaches the target half") {
  Rng rng(65);
  const int F = 1, H = 2, W = 3, C = 4;
  const AttentionWeights wts = AttentionWeights::random(C, 4, C, rng);
  const StitchedPair p = random_pair(rng, F, H, W, C);
  const FeatureGrid base = ssm_attention({p}, wts)[0];
  for (int h = 0; h < H; ++h) {
    for (int w = W; w < 2 * W; ++w) {
      StitchedPair q = p;
      for (int c = 0; c < C; ++c) q.ssm_input.at(0, h, w, c) += 0.5;
      CHECK(max_abs_diff(ssm_attention({q}, wts)[0], base) > 1e-8);
    }
  }
}

// ------------------------------------------------------------ pointmaps

TEST_CASE("single point on the axis lights exactly the principal pixel") {
  Cache3D cache;
  cache.global_cloud = PointCloud(Points3(Vec3(0, 0, 3.0)));
  cache.generation = 1;
  CameraView v;
  v.intrinsics = Intrinsics::from_fov(60.0, 60.0, 9, 9);  // principal point at the center of pixel (4, 4)
  const PointMapImage pm = make_pointmap(v, cache);
  CHECK(pm.valid.count() == 1);
  CHECK(pm.valid(4, 4));
  CHECK(pm.rgb.at(0, 0) == Eigen::Vector3f::Zero());

  const PointMapImage empty = make_pointmap(v, Cache3D{});
  CHECK(empty.valid.count() == 0);
}

TEST_CASE("pointmap pair: identical views, tightness, shared cube corners") {
  Rng rng(66);
  // dense cube surface
  Points3 pts(3, 6 * 40 * 40 + 8);
  Eigen::Index n = 0;
  for (int face = 0; face < 6; ++face) {
    for (int i = 0; i < 40; ++i) {
      for (int j = 0; j < 40; ++j) {
        const double a = -1.0 + 2.0 * (i + 0.5) / 40, b = -1.0 + 2.0 * (j + 0.5) / 40, s = face % 2 ? 1.0 : -1.0;
        Vec3 p = face / 2 == 0 ? Vec3(s, a, b) : face / 2 == 1 ? Vec3(a, s, b) : Vec3(a, b, s);
        pts.col(n++) = p;
      }
    }
  }
  for (int c = 0; c < 8; ++c) pts.col(n++) = Vec3(c & 1 ? 1 : -1, c & 2 ? 1 : -1, c & 4 ? 1 : -1);
  Cache3D cache;
  cache.global_cloud = PointCloud(pts);
  cache.generation = 1;

  CameraView t, r;
  t.intrinsics = r.intrinsics = Intrinsics::from_fov(60.0, 60.0, 64, 64);
  t.pose = CameraPose::look_at(Vec3(3, -2.5, -4), Vec3::Zero(), Vec3(0, -1, 0));
  r.pose = CameraPose::look_at(Vec3(-3, -2.8, -4), Vec3::Zero(), Vec3(0, -1, 0));

  const auto same = make_pointmap_pair(t, t, cache);
  CHECK(same.first.rgb.pixels == same.second.rgb.pixels);
  CHECK(same.first.valid == same.second.valid);

  const auto [pt, pr] = make_pointmap_pair(t, r, cache);
  // channels span [0, 1] exactly over the joint valid set
  for (int c = 0; c < 3; ++c) {
    float lo = 2.0f, hi = -1.0f;
    for (const auto* pm : {&pt, &pr}) {
      for (int v = 0; v < 64; ++v)
        for (int u = 0; u < 64; ++u)
          if (pm->valid(v, u)) lo = std::min(lo, pm->rgb.at(u, v)(c)), hi = std::max(hi, pm->rgb.at(u, v)(c));
    }
    CHECK(lo == 0.0f);
    CHECK(hi == 1.0f);
  }

  // every point seen by both views carries one color in both pointmaps
  const auto ht = render_point_hits(t, cache.global_cloud);
  const auto hr = render_point_hits(r, cache.global_cloud);
  int shared = 0;
  for (Eigen::Index i = 0; i < ht.world.cols(); ++i) {
    if (!ht.valid(i / 64, i % 64)) continue;
    for (Eigen::Index j = 0; j < hr.world.cols(); ++j) {
      if (!hr.valid(j / 64, j % 64) || ht.world.col(i) != hr.world.col(j)) continue;
      ++shared;
      CHECK((pt.rgb.at(int(i % 64), int(i / 64)) - pr.rgb.at(int(j % 64), int(j / 64))).cwiseAbs().maxCoeff() <=
            1.0f / 255.0f);
    }
  }
  CHECK(shared > 20);

  // corners alone: each projects to its own pixel, and the shared ones match the analytic color
  Cache3D corners;
  corners.global_cloud = PointCloud(Points3(pts.rightCols(8)));
  corners.generation = 1;
  const auto [ct, cr] = make_pointmap_pair(t, r, corners);
  int seen = 0;
  for (int c = 0; c < 8; ++c) {
    const Vec3 x = pts.col(pts.cols() - 8 + c);
    const PixelProjection a = project(x, t), b = project(x, r);
    const int ua = int(std::lround(a.u)), va = int(std::lround(a.v)), ub = int(std::lround(b.u)), vb = int(std::lround(b.v));
    if (ua < 0 || ua >= 64 || va < 0 || va >= 64 || ub < 0 || ub >= 64 || vb < 0 || vb >= 64) continue;
    REQUIRE(ct.valid(va, ua));
    REQUIRE(cr.valid(vb, ub));
    const Eigen::Vector3f expect = ((x + Vec3::Ones()) / 2.0).cast<float>();  // corners span [-1, 1] per axis
    CHECK((ct.rgb.at(ua, va) - expect).cwiseAbs().maxCoeff() <= 1.0f / 255.0f);
    CHECK((cr.rgb.at(ub, vb) - expect).cwiseAbs().maxCoeff() <= 1.0f / 255.0f);
    ++seen;
  }
  CHECK(seen >= 4);
}

TEST_CASE("pointmap and image grids") {
  RgbImage img(4, 3);
  img.set(2, 1, Eigen::Vector3f(0.1f, 0.2f, 0.3f));
  const FeatureGrid g = image_to_grid(img, GridRole::Target);
  CHECK(g.frames == 1);
  CHECK(g.width == 4);
  CHECK(g.channels == 3);
  CHECK(g.at(0, 1, 2, 2) == doctest::Approx(0.3));
}

// ------------------------------------------------------------ pair sampler

TEST_CASE("shift range bounds the temporal overlap") {
  const auto [lo, hi] = valid_shift_range(16, 0.30, 0.90);
  CHECK(lo == 2);
  CHECK(hi == 11);
  for (int s = lo; s <= hi; ++s) {
    const double ov = double(16 - s) / 16.0;
    CHECK(ov >= 0.30);
    CHECK(ov <= 0.90);
  }
  const auto empty = valid_shift_range(16, 0.9, 0.3);
  CHECK(empty.first > empty.second);
}

TEST_CASE("pair sampler rates over 1000 seeded pairs") {
  std::vector<PosedSequence> seqs(3);
  for (int s = 0; s < 3; ++s) seqs[std::size_t(s)].views.resize(std::size_t(40 + 10 * s));
  seqs.push_back(PosedSequence{std::vector<CameraView>(10), 9});  // too short: skipped

  const PairStream stream = ssm_pair_sampler(seqs, 1000, 123);
  REQUIRE(stream.pairs.size() == 1000);
  CHECK(stream.skipped > 0);
  CHECK(!stream.log.empty());
  int omitted = 0;
  long frames = 0, dropped = 0;
  for (const auto& p : stream.pairs) {
    CHECK(p.sequence != 3);
    CHECK(p.overlap >= 0.30);
    CHECK(p.overlap <= 0.90);
    CHECK(p.target_frames.size() == 16);
    // measured overlap from the index sets
    std::set<int> tar(p.target_frames.begin(), p.target_frames.end());
    int shared = 0;
    for (int f : p.reference_window) shared += int(tar.count(f));
    CHECK(double(shared) / 16.0 == p.overlap);
    if (p.omitted) {
      ++omitted;
      CHECK(p.reference_frames.empty());
      continue;
    }
    frames += long(p.reference_window.size());
    dropped += p.dropped;
    CHECK(p.reference_frames.size() + std::size_t(p.dropped) == p.reference_window.size());
    std::set<int> win(p.reference_window.begin(), p.reference_window.end());
    for (int f : p.reference_frames) CHECK(win.count(f) == 1);
  }
  const double omit_rate = omitted / 1000.0, drop_rate = double(dropped) / double(frames);
  CHECK(omit_rate >= 0.08);
  CHECK(omit_rate <= 0.12);
  CHECK(drop_rate >= 0.27);
  CHECK(drop_rate <= 0.33);

  // survivors are shuffled: at least some pairs are out of temporal order
  int unordered = 0;
  for (const auto& p : stream.pairs)
    if (!std::is_sorted(p.reference_frames.begin(), p.reference_frames.end())) ++unordered;
  CHECK(unordered > 100);

  const PairStream again = ssm_pair_sampler(seqs, 1000, 123);
  CHECK(again.pairs.back().reference_frames == stream.pairs.back().reference_frames);
}

TEST_CASE("benchmark mode drops 40% and keeps 10% intact") {
  std::vector<PosedSequence> seqs(2);
  for (auto& s : seqs) s.views.resize(64);
  PairSamplerOptions opt;
  opt.mode = SamplerMode::Benchmark;
  const PairStream stream = ssm_pair_sampler(seqs, 2000, 7, opt);
  int kept = 0, eligible = 0;
  long frames = 0, dropped = 0;
  for (const auto& p : stream.pairs) {
    if (p.omitted) continue;
    ++eligible;
    if (p.kept_all) {
      ++kept;
      CHECK(p.dropped == 0);
      continue;
    }
    frames += long(p.reference_window.size());
    dropped += p.dropped;
  }
  CHECK(std::abs(double(kept) / eligible - 0.10) < 0.025);
  CHECK(std::abs(double(dropped) / double(frames) - 0.40) < 0.03);
}

TEST_CASE("pair sampler with no usable sequence ends early") {
  std::vector<PosedSequence> seqs(1);
  seqs[0].views.resize(5);
  const PairStream s = ssm_pair_sampler(seqs, 10, 1);
  CHECK(s.pairs.empty());
  CHECK(!s.log.empty());
}
