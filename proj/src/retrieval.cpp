#include "geomem/retrieval.hpp"

#include "geomem/errors.hpp"

#include <cmath>
#include <random>

namespace geomem {

void Frustum::validate() const {
  view.intrinsics.validate();
  view.pose.validate();
  if (!(near > 0.0) || !(far > near) || !std::isfinite(far)) {
    throw InputError("frustum: require 0 < near < far");
  }
}

double Frustum::volume() const {
  const auto& k = view.intrinsics;
  const double plane_area = (k.width / k.fx) * (k.height / k.fy);
  return plane_area * (far * far * far - near * near * near) / 3.0;
}

namespace {

/// World-space samples uniformly distributed (by volume) inside the frustum.
/// Image-plane coordinates are uniform; depth has density ∝ z².
Points3 sample_frustum(const Frustum& f, int samples, std::uint64_t seed) {
  const auto& k = f.view.intrinsics;
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int strata = static_cast<int>(std::floor(std::cbrt(double(samples)) + 1e-9));
  const double n3 = f.near * f.near * f.near;
  const double f3 = f.far * f.far * f.far;

  Points3 cam(3, samples);
  auto emit = [&](int col, double s, double t, double w) {
    const double z = std::cbrt(n3 + w * (f3 - n3));
    const double x = (s * k.width - k.cx) / k.fx;
    const double y = (t * k.height - k.cy) / k.fy;
    cam.col(col) = Vec3(x * z, y * z, z);
  };
  int col = 0;
  for (int i = 0; i < strata; ++i) {
    for (int j = 0; j < strata; ++j) {
      for (int l = 0; l < strata; ++l) {
        emit(col++, (i + unit(rng)) / strata, (j + unit(rng)) / strata, (l + unit(rng)) / strata);
      }
    }
  }
  while (col < samples) emit(col++, unit(rng), unit(rng), unit(rng));

  Points3 world = f.view.pose.rotation * cam;
  world.colwise() += f.view.pose.translation;
  return world;
}

Eigen::Index count_inside(const Points3& world, const Frustum& f) {
  Eigen::Index inside = 0;
  for (Eigen::Index i = 0; i < world.cols(); ++i) inside += f.contains(world.col(i)) ? 1 : 0;
  return inside;
}

void check_samples(int samples) {
  if (samples < 1000) throw InputError("frustum_overlap: need at least 1000 samples");
}

}  // namespace

bool Frustum::contains(const Vec3& world_point, double eps) const {
  const Vec3 p = view.pose.to_camera(world_point);
  const double z = p.z();
  const double depth_eps = eps * far;
  if (z < near - depth_eps || z > far + depth_eps) return false;
  const auto& k = view.intrinsics;
  const double u = k.fx * p.x() / z + k.cx;
  const double v = k.fy * p.y() / z + k.cy;
  return u >= -eps * k.width && u <= k.width * (1.0 + eps) && v >= -eps * k.height && v <= k.height * (1.0 + eps);
}

double frustum_overlap(const Frustum& a, const Frustum& b, int samples, std::uint64_t seed) {
  check_samples(samples);
  a.validate();
  b.validate();
  return double(count_inside(sample_frustum(a, samples, seed), b)) / double(samples);
}

RetrievalOptions retrieval_defaults(double median_depth) {
  if (!(median_depth > 0.0)) throw InputError("retrieval_defaults: median depth must be positive");
  RetrievalOptions o;
  o.near = 0.1 * median_depth;
  o.far = 3.0 * median_depth;
  return o;
}

int retrieval_count(int num_targets) { return num_targets / 4; }

std::vector<int> retrieval_target_indices(int num_targets) {
  const int f = retrieval_count(num_targets);
  std::vector<int> idx;
  idx.reserve(std::size_t(f));
  for (int i = 0; i < f; ++i) idx.push_back(static_cast<int>((long long)i * num_targets / f));
  return idx;
}

RetrievalPlan plan_retrieval(const std::vector<CameraView>& targets, const MemoryBank& bank,
                             const RetrievalOptions& options) {
  const int n = static_cast<int>(targets.size());
  if (n < 4) throw InputError("plan_retrieval: need at least 4 target poses");
  check_samples(options.samples);

  std::vector<Frustum> bank_frusta;
  bank_frusta.reserve(bank.size());
  for (const auto& e : bank.entries) {
    Frustum f{e.view(), options.near, options.far};
    f.validate();
    bank_frusta.push_back(f);
  }

  RetrievalPlan plan;
  plan.num_targets = n;
  plan.F = retrieval_count(n);
  for (int t : retrieval_target_indices(n)) {
    RetrievalPair pair{t, std::nullopt, 0.0};
    if (!bank_frusta.empty()) {
      const Frustum target{targets[std::size_t(t)], options.near, options.far};
      target.validate();
      const Points3 samples = sample_frustum(target, options.samples, options.seed);
      double best = -1.0;
      int best_idx = -1;
      for (std::size_t j = 0; j < bank_frusta.size(); ++j) {
        const double ov = double(count_inside(samples, bank_frusta[j])) / double(options.samples);
        if (ov > best) {
          best = ov;
          best_idx = static_cast<int>(j);
        }
      }
      if (best >= options.overlap_floor) {
        pair.bank_index = best_idx;
        pair.overlap = best;
      }
    }
    plan.pairs.push_back(pair);
  }
  return plan;
}

double trajectory_overlap_score(const std::vector<CameraView>& trajectory, const MemoryBank& bank,
                                const RetrievalOptions& options) {
  if (trajectory.empty()) throw InputError("trajectory_overlap_score: empty trajectory");
  if (bank.empty()) return 0.0;
  double score = 0.0;
  for (const auto& p : plan_retrieval(trajectory, bank, options).pairs) score += p.overlap;
  return score;
}

}  // namespace geomem
