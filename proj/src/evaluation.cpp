#include "geomem/evaluation.hpp"

#include "geomem/alignment.hpp"
#include "geomem/errors.hpp"
#include "geomem/nn_index.hpp"

#include <cmath>

namespace geomem {

namespace {

double f1_of(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

void check_thresholds(const std::vector<double>& thresholds) {
  for (double t : thresholds) {
    if (!(t > 0.0) || !std::isfinite(t)) throw InputError("pcd metrics: thresholds must be positive and finite");
  }
}

}  // namespace

std::vector<PcdMetrics> pcd_f1_sweep(const PointCloud& pred, const PointCloud& gt,
                                     const std::vector<double>& thresholds) {
  if (gt.empty()) throw InputError("pcd_f1: ground-truth cloud is empty");
  check_thresholds(thresholds);
  std::vector<PcdMetrics> out;
  out.reserve(thresholds.size());
  if (pred.empty()) {
    for (double t : thresholds) out.push_back({0.0, 0.0, 0.0, t});
    return out;
  }
  const Eigen::VectorXd pred_to_gt = KdTree(gt.positions).nearest_squared_distances(pred.positions);
  const Eigen::VectorXd gt_to_pred = KdTree(pred.positions).nearest_squared_distances(gt.positions);
  for (double t : thresholds) {
    const double t2 = t * t;
    const double p = double((pred_to_gt.array() <= t2).count()) / double(pred.size());
    const double r = double((gt_to_pred.array() <= t2).count()) / double(gt.size());
    out.push_back({p, r, f1_of(p, r), t});
  }
  return out;
}

PcdMetrics pcd_f1(const PointCloud& pred, const PointCloud& gt, double threshold) {
  return pcd_f1_sweep(pred, gt, {threshold}).front();
}

double pr_curve_area(const std::vector<PcdMetrics>& sweep) {
  if (sweep.empty()) return 0.0;
  double area = sweep.front().recall * sweep.front().precision;
  for (std::size_t i = 1; i < sweep.size(); ++i) {
    area += (sweep[i].recall - sweep[i - 1].recall) * (sweep[i].precision + sweep[i - 1].precision) / 2.0;
  }
  return area;
}

double pcd_auc(const PointCloud& pred, const PointCloud& gt, const std::vector<double>& thresholds) {
  if (thresholds.size() < 2) throw InputError("pcd_auc: need at least 2 thresholds");
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > thresholds[i - 1])) throw InputError("pcd_auc: thresholds must be strictly ascending");
  }
  return pr_curve_area(pcd_f1_sweep(pred, gt, thresholds));
}

namespace {

Mat3 project_to_so3(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

/// Rotation from the cameras, then the best scale and translation for the centers.
Sim3d fit_with_rotation(const std::vector<CameraPose>& pred, const std::vector<CameraPose>& gt, const Points3& src,
                        const Points3& dst) {
  Mat3 acc = Mat3::Zero();
  for (std::size_t i = 0; i < pred.size(); ++i) acc += gt[i].rotation * pred[i].rotation.transpose();
  Sim3d t;
  t.rotation = project_to_so3(acc);
  const Vec3 mean_src = src.rowwise().mean();
  const Vec3 mean_dst = dst.rowwise().mean();
  const Points3 a = t.rotation * (src.colwise() - mean_src);
  const Points3 b = dst.colwise() - mean_dst;
  const double denom = a.squaredNorm();
  const double s = denom > 0.0 ? (a.array() * b.array()).sum() / denom : 1.0;
  t.scale = s > 0.0 ? s : 1.0;
  t.translation = mean_dst - t.scale * (t.rotation * mean_src);
  return t;
}

}  // namespace

CamMetrics cam_metrics(const std::vector<CameraPose>& pred, const std::vector<CameraPose>& gt) {
  if (pred.size() != gt.size()) throw InputError("cam_metrics: trajectories differ in length");
  if (pred.size() < 2) throw InputError("cam_metrics: need at least 2 poses");
  const auto n = static_cast<Eigen::Index>(pred.size());
  Points3 src(3, n), dst(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    src.col(i) = pred[std::size_t(i)].center();
    dst.col(i) = gt[std::size_t(i)].center();
  }

  CamMetrics m;
  try {
    m.alignment = geomem::umeyama(src, dst, true);
  } catch (const DegenerateInputError&) {
    m.centers_degenerate = true;
    m.alignment = fit_with_rotation(pred, gt, src, dst);
  }

  const Points3 aligned = m.alignment.apply(src);
  double rot = 0.0, dist = 0.0, sq = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = std::size_t(i);
    rot += geodesic_angle(m.alignment.rotation * pred[k].rotation, gt[k].rotation);
    const double d = (aligned.col(i) - dst.col(i)).norm();
    dist += d;
    sq += d * d;
  }
  m.rot_err_deg = rad_to_deg(rot / double(n));
  m.trans_err = dist / double(n);
  m.ate = std::sqrt(sq / double(n));
  return m;
}

}  // namespace geomem
