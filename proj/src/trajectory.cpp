#include "geomem/trajectory.hpp"

#include "geomem/errors.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace geomem {

std::string to_string(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::Up: return "up";
    case TrajectoryKind::Left: return "left";
    case TrajectoryKind::Right: return "right";
    case TrajectoryKind::Orbit: return "orbit";
  }
  return "orbit";
}

TrajectoryKind trajectory_kind_from_string(const std::string& s) {
  for (auto k : {TrajectoryKind::Up, TrajectoryKind::Left, TrajectoryKind::Right, TrajectoryKind::Orbit}) {
    if (to_string(k) == s) return k;
  }
  throw InputError("unknown trajectory kind '" + s + "' (expected up, left, right or orbit)");
}

TrajectorySpec TrajectorySpec::defaults(TrajectoryKind kind, int n_frames) {
  TrajectorySpec s;
  s.kind = kind;
  s.n_frames = n_frames;
  switch (kind) {
    case TrajectoryKind::Up: s.angle_deg = kUpAngleDeg; break;
    case TrajectoryKind::Left: s.angle_deg = kLeftAngleDeg; break;
    case TrajectoryKind::Right: s.angle_deg = kRightAngleDeg; break;
    case TrajectoryKind::Orbit: s.angle_deg = kOrbitAngleDeg; break;
  }
  return s;
}

void TrajectorySpec::validate() const {
  if (n_frames < 2) throw InputError("trajectory: n_frames must be >= 2");
  if (!(angle_deg > 0.0 && angle_deg <= 360.0)) throw InputError("trajectory: angle must lie in (0, 360] degrees");
  if (!(angle_scale > 0.0)) throw InputError("trajectory: angle scale must be positive");
  if (!(center_depth_rule > 0.0)) throw InputError("trajectory: center depth rule must be positive");
  if (kind == TrajectoryKind::Orbit && !(radius_rule > 0.0)) throw InputError("trajectory: orbit radius must be positive");
}

void validate_order(const TrajectoryOrder& order) {
  std::set<TrajectoryKind> seen;
  for (const auto& s : order) {
    if (!seen.insert(s.kind).second) throw InputError("trajectory order repeats '" + to_string(s.kind) + "'");
  }
}

TrajectoryOrder default_order(int n_frames) {
  return {TrajectorySpec::defaults(TrajectoryKind::Orbit, n_frames), TrajectorySpec::defaults(TrajectoryKind::Up, n_frames),
          TrajectorySpec::defaults(TrajectoryKind::Right, n_frames),
          TrajectorySpec::defaults(TrajectoryKind::Left, n_frames)};
}

std::vector<TrajectoryOrder> all_orders(int n_frames) {
  std::vector<TrajectoryKind> kinds{TrajectoryKind::Up, TrajectoryKind::Left, TrajectoryKind::Right,
                                    TrajectoryKind::Orbit};
  std::vector<TrajectoryOrder> out;
  do {
    TrajectoryOrder o;
    for (auto k : kinds) o.push_back(TrajectorySpec::defaults(k, n_frames));
    out.push_back(std::move(o));
  } while (std::next_permutation(kinds.begin(), kinds.end()));
  return out;
}

Vec3 rotation_center(const TrajectorySpec& spec, const CameraView& start, double median_depth) {
  return start.pose.center() + spec.center_depth_rule * median_depth * start.pose.forward();
}

std::vector<CameraView> synthesize(const TrajectorySpec& spec, const CameraView& start, double median_depth) {
  spec.validate();
  start.validate();
  if (!(median_depth > 0.0) || !std::isfinite(median_depth)) {
    throw InputError("synthesize: median depth must be positive and finite");
  }
  const Vec3 c = rotation_center(spec, start, median_depth);
  const Vec3 p0 = start.pose.center();
  const Mat3& r0 = start.pose.rotation;
  const double total = deg_to_rad(spec.effective_angle_deg());
  const int n = spec.n_frames;

  std::vector<CameraView> out;
  out.reserve(std::size_t(n));
  out.push_back(start);
  out.back().frame_id = 0;

  if (spec.kind == TrajectoryKind::Orbit) {
    const double r = spec.radius_rule * median_depth;
    const Vec3 right = r0.col(0);
    const Vec3 up = -r0.col(1);
    const Vec3 o = p0 - r * right;
    const Vec3 down_hint = r0.col(1);
    for (int k = 1; k < n; ++k) {
      const double phi = total * k / (n - 1);
      const Vec3 eye = o + r * (std::cos(phi) * right + std::sin(phi) * up);
      CameraView v = start;
      v.pose = CameraPose::look_at(eye, c, down_hint);
      v.frame_id = k;
      out.push_back(v);
    }
    return out;
  }

  // pitch about camera x (negative angle raises the camera), yaw about camera y
  Vec3 axis = r0.col(0);
  double sign = -1.0;
  if (spec.kind == TrajectoryKind::Left) {
    axis = r0.col(1);
    sign = 1.0;
  } else if (spec.kind == TrajectoryKind::Right) {
    axis = r0.col(1);
    sign = -1.0;
  }
  for (int k = 1; k < n; ++k) {
    const Mat3 rot = rotation_about(axis, sign * total * k / (n - 1));
    CameraView v = start;
    v.pose.rotation = rot * r0;
    v.pose.translation = c + rot * (p0 - c);
    v.frame_id = k;
    out.push_back(v);
  }
  return out;
}

namespace {

int next_generated_id(const MemoryBank& bank) {
  int next = 0;
  for (const auto& e : bank.entries) {
    if (e.tag == SourceTag::Generated) next = std::max(next, e.view().frame_id + 1);
  }
  return next;
}

}  // namespace

ScoredOrder score_sequence(const std::vector<std::vector<CameraView>>& trajectories, const MemoryBank& initial_bank,
                           const RankOptions& options) {
  ScoredOrder result;
  MemoryBank bank = initial_bank;
  for (const auto& traj : trajectories) {
    double s = 0.0;
    if (traj.size() >= 4) s = trajectory_overlap_score(traj, bank, options.retrieval);
    result.per_trajectory.push_back(s);
    result.score += s;
    if (options.update_bank && !traj.empty()) {
      const int offset = next_generated_id(bank);
      std::vector<Frame> frames;
      frames.reserve(traj.size());
      for (const auto& v : traj) {
        Frame f;
        f.view = v;
        f.view.frame_id = offset + v.frame_id;
        frames.push_back(std::move(f));
      }
      bank = bank_insert(bank, frames, SourceTag::Generated);
    }
  }
  return result;
}

std::vector<ScoredOrder> rank_orders(const std::vector<TrajectoryOrder>& orders, const MemoryBank& initial_bank,
                                     const CameraView& start, double median_depth, const RankOptions& options) {
  if (orders.empty()) throw InputError("rank_orders: need at least one order");
  std::vector<ScoredOrder> scored;
  scored.reserve(orders.size());
  for (const auto& order : orders) {
    validate_order(order);
    std::vector<std::vector<CameraView>> trajs;
    trajs.reserve(order.size());
    for (const auto& spec : order) trajs.push_back(synthesize(spec, start, median_depth));
    ScoredOrder s = score_sequence(trajs, initial_bank, options);
    s.order = order;
    scored.push_back(std::move(s));
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const ScoredOrder& a, const ScoredOrder& b) { return a.score > b.score; });
  return scored;
}

}  // namespace geomem
