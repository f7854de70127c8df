#include "geomem/alignment.hpp"
#include "geomem/dmd.hpp"
#include "geomem/errors.hpp"
#include "geomem/evaluation.hpp"
#include "geomem/geometry.hpp"
#include "geomem/io.hpp"
#include "geomem/panorama.hpp"
#include "geomem/pipeline.hpp"
#include "geomem/retrieval.hpp"
#include "geomem/trajectory.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace geomem;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void emit(const json& j) { std::cout << j.dump(2) << "\n"; }

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw InputError("not a number: '" + item + "'");
    }
  }
  return out;
}

CameraView pick(const std::vector<CameraView>& views, int index, const std::string& what) {
  if (index < 0 || index >= int(views.size())) {
    throw InputError(what + ": camera index " + std::to_string(index) + " out of range (" +
                     std::to_string(views.size()) + " cameras)");
  }
  return views[std::size_t(index)];
}

json pcd_json(const PcdMetrics& m) {
  return {{"threshold", m.threshold}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
}

json summary(const PipelineResult& r) {
  return {{"pcd", r.report["pcd"]},
          {"cameras", r.report["cameras"]},
          {"cache", r.report["cache"]},
          {"bank", r.report["bank"]}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geomem: geometry memory toolkit for trajectory-driven scene generation"};
  app.require_subcommand(1);
  std::string active = "cli";

  // backproject
  auto* bp = app.add_subcommand("backproject", "Lift a depth map to a PLY point cloud");
  std::string bp_depth, bp_cams, bp_image, bp_out;
  int bp_index = 0;
  bool bp_ascii = false;
  bp->add_option("--depth", bp_depth, "PFM or raw depth map")->required();
  bp->add_option("--camera", bp_cams, "cams.json (object or array)")->required();
  bp->add_option("--index", bp_index, "camera index inside the array");
  bp->add_option("--image", bp_image, "PNG colors");
  bp->add_option("--out", bp_out, "output PLY")->required();
  bp->add_flag("--ascii", bp_ascii, "write ASCII PLY");

  // align
  auto* al = app.add_subcommand("align", "Similarity between two point clouds");
  std::string al_src, al_dst, al_mode = "index";
  bool al_icp = false, al_rigid = false;
  al->add_option("--source", al_src, "PLY to move")->required();
  al->add_option("--target", al_dst, "reference PLY")->required();
  al->add_option("--match", al_mode, "index (i-th to i-th) or nn (nearest neighbors)")
      ->check(CLI::IsMember({"index", "nn"}));
  al->add_flag("--icp", al_icp, "refine with trimmed ICP");
  al->add_flag("--rigid", al_rigid, "no scale");

  // retrieve
  auto* rt = app.add_subcommand("retrieve", "Plan memory-bank references for a trajectory");
  std::string rt_targets, rt_bank;
  double rt_median = 0.0;
  RetrievalOptions rt_opt;
  rt->add_option("--targets", rt_targets, "trajectory cams.json")->required();
  rt->add_option("--bank", rt_bank, "bank cams.json")->required();
  rt->add_option("--median-depth", rt_median, "sets near/far to 0.1x / 3x this depth");
  rt->add_option("--near", rt_opt.near);
  rt->add_option("--far", rt_opt.far);
  rt->add_option("--samples", rt_opt.samples);
  rt->add_option("--seed", rt_opt.seed);
  rt->add_option("--floor", rt_opt.overlap_floor, "minimum overlap to attach a reference");

  // traj
  auto* tj = app.add_subcommand("traj", "Synthesize a camera trajectory");
  std::string tj_kind = "orbit", tj_start, tj_out;
  int tj_frames = kDefaultTrajectoryFrames, tj_width = 64, tj_height = 48;
  double tj_median = 1.0, tj_angle = -1.0, tj_angle_scale = 1.0;
  tj->add_option("--kind", tj_kind)->check(CLI::IsMember({"up", "left", "right", "orbit"}));
  tj->add_option("--start", tj_start, "start camera JSON (default: identity pose, 60 deg FoV)");
  tj->add_option("--median-depth", tj_median)->required();
  tj->add_option("--frames", tj_frames);
  tj->add_option("--angle", tj_angle, "override the default angle (deg)");
  tj->add_option("--angle-scale", tj_angle_scale);
  tj->add_option("--width", tj_width);
  tj->add_option("--height", tj_height);
  tj->add_option("--out", tj_out, "write cams.json");

  // pano-split
  auto* ps = app.add_subcommand("pano-split", "Split an equirectangular panorama into perspective views");
  std::string ps_pano, ps_out;
  PanoSplitOptions ps_opt;
  ps->add_option("--pano", ps_pano)->required();
  ps->add_option("--out", ps_out, "output directory")->required();
  ps->add_option("--width", ps_opt.out_width);
  ps->add_option("--height", ps_opt.out_height);
  ps->add_option("--fov-h", ps_opt.fov_h_deg);
  ps->add_option("--fov-v", ps_opt.fov_v_deg);

  // eval-pcd
  auto* ep = app.add_subcommand("eval-pcd", "Point cloud precision / recall / F1 / AUC");
  std::string ep_pred, ep_gt, ep_auc;
  double ep_threshold = 0.0;
  ep->add_option("--pred", ep_pred)->required();
  ep->add_option("--gt", ep_gt)->required();
  ep->add_option("--threshold", ep_threshold)->required();
  ep->add_option("--auc,--thresholds", ep_auc, "comma-separated ascending thresholds");

  // eval-cam
  auto* ec = app.add_subcommand("eval-cam", "Camera rotation / translation / ATE after similarity alignment");
  std::string ec_pred, ec_gt;
  ec->add_option("--pred", ec_pred)->required();
  ec->add_option("--gt", ec_gt)->required();

  // dmd-toy
  auto* dt = app.add_subcommand("dmd-toy", "Distill a 4-step generator on a toy target");
  std::string dt_config, dt_log;
  int dt_samples = 100000;
  dt->add_option("--config", dt_config)->required();
  dt->add_option("--log", dt_log, "CSV training log");
  dt->add_option("--samples", dt_samples, "evaluation samples");

  // pipeline / pano-pipeline
  auto* pl = app.add_subcommand("pipeline", "Run the generate, cache, retrieve, evaluate loop");
  std::string pl_config, pl_out;
  pl->add_option("--config", pl_config)->required();
  pl->add_option("--out", pl_out, "override out_dir");

  auto* pp = app.add_subcommand("pano-pipeline", "Seed memory from a panorama, then run the loop");
  std::string pp_config, pp_out, pp_pano, pp_depth;
  pp->add_option("--config", pp_config)->required();
  pp->add_option("--out", pp_out, "override out_dir");
  pp->add_option("--pano", pp_pano, "equirectangular PNG (default: render the scene)");
  pp->add_option("--depth", pp_depth, "equirectangular range PFM, required with --pano");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*bp) {
      active = "backproject";
      const DepthMap depth = io::read_depth(bp_depth);
      const CameraView view = pick(io::read_cameras(bp_cams), bp_index, "backproject");
      const PointCloud cloud =
          bp_image.empty() ? backproject(depth, view) : backproject(depth, view, io::read_png(bp_image));
      io::write_ply(bp_out, cloud, !bp_ascii);
      emit({{"points", cloud.size()}, {"out", bp_out}});
    } else if (*al) {
      active = "align";
      const PointCloud src = io::read_ply(al_src);
      const PointCloud dst = io::read_ply(al_dst);
      Sim3d t;
      if (al_mode == "index") {
        if (src.size() != dst.size()) throw InputError("--match index needs clouds of equal size");
        t = geomem::umeyama(src.positions, dst.positions, !al_rigid);
      } else {
        IcpOptions o;
        o.with_scale = !al_rigid;
        t = align_by_nearest_neighbors(src, dst, Sim3d::identity(), o);
      }
      json out = {{"transform", io::transform_to_json(t)}};
      if (al_icp) {
        IcpOptions o;
        o.with_scale = !al_rigid;
        const IcpResult r = icp_scale_refine(src, dst, t, o);
        t = r.transform;
        out["transform"] = io::transform_to_json(t);
        out["icp"] = {{"iterations", r.iterations}, {"converged", r.converged}, {"residuals", r.residuals}};
      }
      if (al_mode == "index") out["rms"] = alignment_rms(src.positions, dst.positions, t);
      emit(out);
    } else if (*rt) {
      active = "retrieve";
      const auto targets = io::read_cameras(rt_targets);
      MemoryBank bank;
      for (const auto& v : io::read_cameras(rt_bank)) bank.entries.push_back({Frame{v, nullptr, {}}, SourceTag::Generated});
      RetrievalOptions opt = rt_opt;
      if (rt_median > 0.0) {
        const RetrievalOptions d = retrieval_defaults(rt_median);
        opt.near = d.near;
        opt.far = d.far;
      }
      const RetrievalPlan plan = plan_retrieval(targets, bank, opt);
      json pairs = json::array();
      for (const auto& p : plan.pairs) {
        pairs.push_back({{"target_index", p.target_index},
                         {"bank_index", p.bank_index ? json(*p.bank_index) : json(nullptr)},
                         {"overlap", p.overlap}});
      }
      emit({{"F", plan.F}, {"num_targets", plan.num_targets}, {"pairs", pairs}});
    } else if (*tj) {
      active = "traj";
      CameraView start;
      if (tj_start.empty()) {
        start.intrinsics = Intrinsics::from_fov(
            60.0, 2.0 * rad_to_deg(std::atan(std::tan(deg_to_rad(30.0)) * tj_height / tj_width)), tj_width, tj_height);
      } else {
        start = pick(io::read_cameras(tj_start), 0, "traj");
      }
      TrajectorySpec spec = TrajectorySpec::defaults(trajectory_kind_from_string(tj_kind), tj_frames);
      if (tj_angle > 0.0) spec.angle_deg = tj_angle;
      spec.angle_scale = tj_angle_scale;
      const auto views = synthesize(spec, start, tj_median);
      const Vec3 c = rotation_center(spec, start, tj_median);
      if (!tj_out.empty()) io::write_cameras(tj_out, views);
      json cams = json::array();
      for (const auto& v : views) cams.push_back(io::camera_to_json(v));
      emit({{"kind", tj_kind},
            {"frames", views.size()},
            {"angle_deg", spec.effective_angle_deg()},
            {"rotation_center", {c.x(), c.y(), c.z()}},
            {"cameras", tj_out.empty() ? cams : json(tj_out)}});
    } else if (*ps) {
      active = "pano-split";
      const auto views = pano_to_perspective(io::read_png(ps_pano), ps_opt);
      fs::create_directories(ps_out);
      std::vector<CameraView> cams;
      for (std::size_t i = 0; i < views.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "view_%02d.png", int(i));
        io::write_png(fs::path(ps_out) / name, views[i].image);
        cams.push_back(views[i].view);
      }
      io::write_cameras(fs::path(ps_out) / "cams.json", cams);
      emit({{"views", views.size()}, {"out", ps_out}});
    } else if (*ep) {
      active = "eval-pcd";
      const PointCloud pred = io::read_ply(ep_pred);
      const PointCloud gt = io::read_ply(ep_gt);
      json out = pcd_json(pcd_f1(pred, gt, ep_threshold));
      if (!ep_auc.empty()) {
        const auto ts = parse_list(ep_auc);
        out["auc"] = pcd_auc(pred, gt, ts);
        out["auc_thresholds"] = ts;
      }
      emit(out);
    } else if (*ec) {
      active = "eval-cam";
      std::vector<CameraPose> pred, gt;
      for (const auto& v : io::read_cameras(ec_pred)) pred.push_back(v.pose);
      for (const auto& v : io::read_cameras(ec_gt)) gt.push_back(v.pose);
      const CamMetrics m = cam_metrics(pred, gt);
      emit({{"rot_err_deg", m.rot_err_deg},
            {"trans_err", m.trans_err},
            {"ate", m.ate},
            {"centers_degenerate", m.centers_degenerate},
            {"alignment", io::transform_to_json(m.alignment)}});
    } else if (*dt) {
      active = "dmd-toy";
      const dmd::ToyProblem p = dmd::load_toy_problem(dt_config);
      Rng rng(p.train.seed);
      const dmd::FewStepGenerator gen(p.dim(), p.generator_hidden, rng);
      const auto real = p.make_real();
      auto fake = p.make_fake(rng);
      const dmd::TrainResult r = dmd::dmd_train(gen, *fake, *real, p.schedule, p.train);
      if (!dt_log.empty()) dmd::write_log_csv(dt_log, r.log);
      Rng eval_rng(p.train.seed + 1);
      const Eigen::MatrixXd s = r.generator.sample(dt_samples, eval_rng);
      const Eigen::VectorXd mean = s.rowwise().mean();
      const Eigen::VectorXd stdev = ((s.colwise() - mean).array().square().rowwise().sum() / double(s.cols() - 1)).sqrt();
      emit({{"dim", p.dim()},
            {"target", p.target_kind},
            {"gen_updates", r.gen_updates},
            {"fake_updates", r.fake_updates},
            {"sample_mean", std::vector<double>(mean.data(), mean.data() + mean.size())},
            {"sample_std", std::vector<double>(stdev.data(), stdev.data() + stdev.size())},
            {"final_loss_proxy", r.log.empty() ? 0.0 : r.log.back().gen_loss_proxy}});
    } else if (*pl) {
      active = "config";
      PipelineConfig cfg = PipelineConfig::from_toml_file(pl_config);
      if (!pl_out.empty()) cfg.out_dir = pl_out;
      active = "pipeline";
      emit(summary(run_pipeline(cfg)));
    } else if (*pp) {
      active = "config";
      PipelineConfig cfg = PipelineConfig::from_toml_file(pp_config);
      if (!pp_out.empty()) cfg.out_dir = pp_out;
      active = "pano-pipeline";
      if (!pp_pano.empty() && pp_depth.empty()) {
        throw StageError("panorama", "panorama depth is missing: pass --depth with --pano");
      }
      if (pp_pano.empty() && !pp_depth.empty()) throw StageError("panorama", "--depth needs --pano");
      if (pp_pano.empty()) {
        emit(summary(run_panorama(cfg)));
      } else {
        const RgbImage pano = io::read_png(pp_pano);
        const DepthMap range = io::read_depth(pp_depth);
        emit(summary(run_panorama(cfg, pano, range.values.array() * range.valid.cast<double>().array())));
      }
    }
  } catch (const StageError& e) {
    std::cerr << "error " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error [" << active << "] " << e.what() << "\n";
    return 1;
  }
  return 0;
}
