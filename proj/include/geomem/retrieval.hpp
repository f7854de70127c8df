#pragma once

#include "geomem/geometry.hpp"
#include "geomem/memory.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace geomem {

struct Frustum {
  CameraView view;
  double near = 0.1;
  double far = 10.0;

  void validate() const;
  /// Closed-form volume of the truncated pyramid.
  double volume() const;
  bool contains(const Vec3& world_point, double eps = 1e-9) const;
};

/// Fraction of a's volume that lies inside b, estimated from stratified samples
/// drawn inside a. Deterministic for a fixed seed. Throws InputError for
/// degenerate frusta or fewer than 1,000 samples.
double frustum_overlap(const Frustum& a, const Frustum& b, int samples = 8192, std::uint64_t seed = 0);

struct RetrievalOptions {
  double near = 0.1;
  double far = 10.0;
  int samples = 8192;
  std::uint64_t seed = 0;
  double overlap_floor = 0.05;  // below this no reference is attached
};

/// near = 0.1 × median depth, far = 3 × median depth.
RetrievalOptions retrieval_defaults(double median_depth);

struct RetrievalPair {
  int target_index = 0;
  std::optional<int> bank_index;
  double overlap = 0.0;  // overlap of the selected entry (0 when none)
};

struct RetrievalPlan {
  std::vector<RetrievalPair> pairs;
  int num_targets = 0;
  int F = 0;
};

/// floor(N / 4).
int retrieval_count(int num_targets);

/// F uniformly spaced target indices, floor(i · N / F) for i < F.
std::vector<int> retrieval_target_indices(int num_targets);

/// For each sampled target, the bank entry with the largest frustum overlap
/// (lowest index on ties), or none below the overlap floor. N must be >= 4.
RetrievalPlan plan_retrieval(const std::vector<CameraView>& targets, const MemoryBank& bank,
                             const RetrievalOptions& options = {});

/// Sum of the overlaps selected by plan_retrieval; 0 for an empty bank.
double trajectory_overlap_score(const std::vector<CameraView>& trajectory, const MemoryBank& bank,
                                const RetrievalOptions& options = {});

}  // namespace geomem
