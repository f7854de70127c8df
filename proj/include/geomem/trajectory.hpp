#pragma once

#include "geomem/geometry.hpp"
#include "geomem/memory.hpp"
#include "geomem/retrieval.hpp"

#include <string>
#include <vector>

namespace geomem {

enum class TrajectoryKind { Up, Left, Right, Orbit };

std::string to_string(TrajectoryKind kind);
TrajectoryKind trajectory_kind_from_string(const std::string& s);

inline constexpr double kUpAngleDeg = 45.0;
inline constexpr double kLeftAngleDeg = 90.0;
inline constexpr double kRightAngleDeg = 90.0;
inline constexpr double kOrbitAngleDeg = 360.0;
inline constexpr double kOrbitRadiusRule = 0.3;
inline constexpr double kCenterDepthRule = 1.0;
inline constexpr int kDefaultTrajectoryFrames = 81;

struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::Orbit;
  double angle_deg = kOrbitAngleDeg;
  double center_depth_rule = kCenterDepthRule;  // rotation center at this × median depth along the start axis
  double radius_rule = kOrbitRadiusRule;        // orbit radius as a multiple of the median depth
  int n_frames = kDefaultTrajectoryFrames;
  double angle_scale = 1.0;                     // < 1 for face-forward scenes

  /// Default angle for the kind (45° up, 90° left/right, 360° orbit).
  static TrajectorySpec defaults(TrajectoryKind kind, int n_frames = kDefaultTrajectoryFrames);

  double effective_angle_deg() const { return angle_deg * angle_scale; }
  void validate() const;
};

using TrajectoryOrder = std::vector<TrajectorySpec>;

/// Throws InputError when a kind repeats.
void validate_order(const TrajectoryOrder& order);

/// orbit → up → right → left.
TrajectoryOrder default_order(int n_frames = kDefaultTrajectoryFrames);

/// Every permutation of the four default trajectories (24 orders).
std::vector<TrajectoryOrder> all_orders(int n_frames = kDefaultTrajectoryFrames);

/// Rotation center: start center + center_depth_rule · median_depth · forward.
Vec3 rotation_center(const TrajectorySpec& spec, const CameraView& start, double median_depth);

/// Camera path starting exactly at `start`. up/left/right sweep an arc about
/// the rotation center (pitch about the camera x axis, yaw about its y axis)
/// in n_frames − 1 equal steps; orbit moves on a circle of radius
/// radius_rule · median_depth in the start camera's image plane, counter-clockwise
/// as seen by the camera, starting at the start position. Every pose looks at
/// the rotation center. frame_id = index along the path.
std::vector<CameraView> synthesize(const TrajectorySpec& spec, const CameraView& start, double median_depth);

struct ScoredOrder {
  TrajectoryOrder order;
  double score = 0.0;
  std::vector<double> per_trajectory;
};

struct RankOptions {
  RetrievalOptions retrieval;
  bool update_bank = true;  // false: every trajectory retrieves from the initial bank only
};

/// Sum of trajectory_overlap_score over trajectories run in sequence, appending
/// each one's frames to the bank after its turn (when update_bank). Trajectories
/// shorter than 4 poses retrieve nothing and contribute 0.
ScoredOrder score_sequence(const std::vector<std::vector<CameraView>>& trajectories, const MemoryBank& initial_bank,
                           const RankOptions& options = {});

/// Scores every order from `start` and returns them sorted by descending score
/// (stable, so ties keep their input order).
std::vector<ScoredOrder> rank_orders(const std::vector<TrajectoryOrder>& orders, const MemoryBank& initial_bank,
                                     const CameraView& start, double median_depth, const RankOptions& options = {});

}  // namespace geomem
