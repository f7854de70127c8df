#pragma once

#include "geomem/geometry.hpp"
#include "geomem/point_cloud.hpp"

#include <vector>

namespace geomem {

struct PcdMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double threshold = 0.0;
};

/// Precision: fraction of pred points with a gt point within threshold.
/// Recall: fraction of gt points with a pred point within threshold.
/// Distances compare as squared distance <= threshold². Clouds must already be
/// aligned. Empty gt throws InputError; empty pred gives zeros.
PcdMetrics pcd_f1(const PointCloud& pred, const PointCloud& gt, double threshold);

/// pcd_f1 at every threshold, sharing one nearest-neighbor pass.
std::vector<PcdMetrics> pcd_f1_sweep(const PointCloud& pred, const PointCloud& gt,
                                     const std::vector<double>& thresholds);

/// Trapezoidal area under the (recall, precision) curve traced by strictly
/// ascending thresholds. The curve starts at recall 0 with the first point's
/// precision, so a perfect reconstruction scores 1. Throws InputError for fewer
/// than 2 thresholds or thresholds that are not strictly ascending.
double pcd_auc(const PointCloud& pred, const PointCloud& gt, const std::vector<double>& thresholds);

/// Area for an already computed sweep (same conventions as pcd_auc).
double pr_curve_area(const std::vector<PcdMetrics>& sweep);

struct CamMetrics {
  double rot_err_deg = 0.0;  // mean geodesic angle after alignment, degrees
  double trans_err = 0.0;    // mean aligned center distance
  double ate = 0.0;          // RMS aligned center distance
  Sim3d alignment;           // maps the predicted trajectory onto the ground truth
  bool centers_degenerate = false;
};

/// Similarity-aligns predicted camera centers to the ground truth (Umeyama),
/// then compares aligned rotations (R_align · R_pred) and centers. When the
/// centers are collinear or coincident the alignment rotation is taken from
/// the camera rotations instead (chordal mean of R_gt · R_predᵀ), and scale
/// and translation are fitted on the centers with that rotation fixed.
/// Throws InputError on length mismatch or fewer than 2 poses.
CamMetrics cam_metrics(const std::vector<CameraPose>& pred, const std::vector<CameraPose>& gt);

}  // namespace geomem
