#include "geomem/pipeline.hpp"

#include "geomem/alignment.hpp"
#include "geomem/errors.hpp"
#include "geomem/io.hpp"
#include "geomem/retrieval.hpp"
#include "geomem/stereo_attn.hpp"

#include <toml.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numbers>
#include <set>
#include <sstream>

namespace geomem {

namespace fs = std::filesystem;
using nlohmann::json;

// ------------------------------------------------------------ config

void PipelineConfig::validate() const {
  if (frames < 4) throw InputError("config: frames must be >= 4 (retrieval samples floor(N/4) targets)");
  if (width < 2 || height < 2) throw InputError("config: width and height must be >= 2");
  if (bank_stride < 1) throw InputError("config: bank_stride must be >= 1");
  if (retrieval_samples < 1000) throw InputError("config: retrieval_samples must be >= 1000");
  if (!(overlap_floor >= 0.0 && overlap_floor <= 1.0)) throw InputError("config: overlap_floor must lie in [0, 1]");
  if (!std::isfinite(voxel) || !std::isfinite(f1_threshold)) throw InputError("config: non-finite voxel or threshold");
  if (auc_thresholds.size() == 1) throw InputError("config: auc_thresholds needs at least 2 values");
  for (std::size_t i = 0; i < auc_thresholds.size(); ++i) {
    if (!(auc_thresholds[i] > 0.0)) throw InputError("config: auc_thresholds must be positive");
    if (i > 0 && !(auc_thresholds[i] > auc_thresholds[i - 1])) {
      throw InputError("config: auc_thresholds must be strictly ascending");
    }
  }
  if (order.empty()) throw InputError("config: order must list at least one trajectory");
  std::set<TrajectoryKind> kinds(order.begin(), order.end());
  if (kinds.size() != order.size()) throw InputError("config: a trajectory kind repeats in order");
  const auto names = preset_names();
  if (std::find(names.begin(), names.end(), scene) == names.end() && !fs::exists(scene)) {
    throw InputError("config: scene '" + scene + "' is neither a preset nor an existing file");
  }
  if (generator == "replay") {
    if (replay_dir.empty() || !fs::is_directory(replay_dir)) {
      throw InputError("config: replay_dir '" + replay_dir.string() + "' does not exist");
    }
  } else if (generator != "oracle") {
    throw InputError("config: generator must be oracle or replay, got '" + generator + "'");
  }
  if (reconstructor != "oracle" && reconstructor != "noisy") {
    throw InputError("config: reconstructor must be oracle or noisy, got '" + reconstructor + "'");
  }
  if (!(noise.depth_sigma >= 0.0) || !(noise.rotation_deg >= 0.0) || !(noise.translation >= 0.0) ||
      !(noise.scale > 0.0)) {
    throw InputError("config: noise parameters must be non-negative and scale positive");
  }
  if (pano_height < 2 || pano_width != 2 * pano_height) throw InputError("config: pano width must be 2 x height");
  if (rank_samples < 1000) throw InputError("config: rank_samples must be >= 1000");
}

json PipelineConfig::to_json() const {
  json ord = json::array();
  for (auto k : order) ord.push_back(geomem::to_string(k));
  return {{"scene", scene},
          {"out_dir", out_dir.string()},
          {"frames", frames},
          {"order", ord},
          {"width", width},
          {"height", height},
          {"bank_stride", bank_stride},
          {"voxel", voxel},
          {"retrieval_samples", retrieval_samples},
          {"overlap_floor", overlap_floor},
          {"retrieval_seed", retrieval_seed},
          {"f1_threshold", f1_threshold},
          {"auc_thresholds", auc_thresholds},
          {"generator", generator},
          {"replay_dir", replay_dir.string()},
          {"reconstructor", reconstructor},
          {"noise",
           {{"depth_sigma", noise.depth_sigma},
            {"rotation_deg", noise.rotation_deg},
            {"translation", noise.translation},
            {"scale", noise.scale},
            {"seed", noise.seed}}},
          {"icp_refine", icp_refine},
          {"write_frames", write_frames},
          {"write_gt", write_gt},
          {"pano", {{"width", pano_width}, {"height", pano_height}}},
          {"rank_orders", rank_orders},
          {"rank_samples", rank_samples}};
}

namespace {

template <typename T>
T toml_get(const toml::table& t, const std::string& key, T fallback) {
  const toml::node* n = t.get(key);
  if (!n) return fallback;
  if constexpr (std::is_same_v<T, bool>) {
    if (auto v = n->value<bool>()) return *v;
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (auto v = n->value<std::string>()) return *v;
  } else if constexpr (std::is_floating_point_v<T>) {
    if (auto v = n->value<double>()) return *v;
  } else {
    if (auto v = n->value<std::int64_t>()) {
      if constexpr (std::is_unsigned_v<T>) {
        if (*v < 0) throw InputError("config: '" + key + "' must be non-negative");
      }
      return static_cast<T>(*v);
    }
  }
  throw InputError("config: '" + key + "' has the wrong type");
}

void reject_unknown(const toml::table& t, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [k, v] : t) {
    if (!known.count(std::string(k.str()))) {
      throw InputError("config: unknown key '" + std::string(k.str()) + "' in " + where);
    }
  }
}

PipelineConfig from_table(const toml::table& t, const fs::path& base) {
  reject_unknown(t,
                 {"scene", "out_dir", "frames", "order", "width", "height", "bank_stride", "voxel",
                  "retrieval_samples", "overlap_floor", "retrieval_seed", "f1_threshold", "auc_thresholds",
                  "generator", "replay_dir", "reconstructor", "noise", "icp_refine", "write_frames", "write_gt",
                  "pano", "rank_orders", "rank_samples"},
                 "the top level");
  PipelineConfig c;
  const auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return path.is_relative() && !base.empty() ? base / path : path;
  };
  c.scene = toml_get<std::string>(t, "scene", c.scene);
  const auto names = preset_names();
  if (std::find(names.begin(), names.end(), c.scene) == names.end()) c.scene = resolve(c.scene).string();
  if (t.contains("out_dir")) c.out_dir = resolve(toml_get<std::string>(t, "out_dir", ""));
  c.frames = toml_get<int>(t, "frames", c.frames);
  if (const toml::array* arr = t["order"].as_array()) {
    c.order.clear();
    for (const auto& n : *arr) {
      const auto s = n.value<std::string>();
      if (!s) throw InputError("config: order entries must be strings");
      c.order.push_back(trajectory_kind_from_string(*s));
    }
  } else if (t.contains("order")) {
    throw InputError("config: order must be an array of strings");
  }
  c.width = toml_get<int>(t, "width", c.width);
  c.height = toml_get<int>(t, "height", c.height);
  c.bank_stride = toml_get<int>(t, "bank_stride", c.bank_stride);
  c.voxel = toml_get<double>(t, "voxel", c.voxel);
  c.retrieval_samples = toml_get<int>(t, "retrieval_samples", c.retrieval_samples);
  c.overlap_floor = toml_get<double>(t, "overlap_floor", c.overlap_floor);
  c.retrieval_seed = toml_get<std::uint64_t>(t, "retrieval_seed", c.retrieval_seed);
  c.f1_threshold = toml_get<double>(t, "f1_threshold", c.f1_threshold);
  if (const toml::array* arr = t["auc_thresholds"].as_array()) {
    for (const auto& n : *arr) {
      const auto v = n.value<double>();
      if (!v) throw InputError("config: auc_thresholds entries must be numbers");
      c.auc_thresholds.push_back(*v);
    }
  }
  c.generator = toml_get<std::string>(t, "generator", c.generator);
  if (t.contains("replay_dir")) c.replay_dir = resolve(toml_get<std::string>(t, "replay_dir", ""));
  c.reconstructor = toml_get<std::string>(t, "reconstructor", c.reconstructor);
  if (const toml::table* n = t["noise"].as_table()) {
    reject_unknown(*n, {"depth_sigma", "rotation_deg", "translation", "scale", "seed"}, "[noise]");
    c.noise.depth_sigma = toml_get<double>(*n, "depth_sigma", c.noise.depth_sigma);
    c.noise.rotation_deg = toml_get<double>(*n, "rotation_deg", c.noise.rotation_deg);
    c.noise.translation = toml_get<double>(*n, "translation", c.noise.translation);
    c.noise.scale = toml_get<double>(*n, "scale", c.noise.scale);
    c.noise.seed = toml_get<std::uint64_t>(*n, "seed", c.noise.seed);
  }
  c.icp_refine = toml_get<bool>(t, "icp_refine", c.icp_refine);
  c.write_frames = toml_get<bool>(t, "write_frames", c.write_frames);
  c.write_gt = toml_get<bool>(t, "write_gt", c.write_gt);
  if (const toml::table* p = t["pano"].as_table()) {
    reject_unknown(*p, {"width", "height"}, "[pano]");
    c.pano_width = toml_get<int>(*p, "width", c.pano_width);
    c.pano_height = toml_get<int>(*p, "height", c.pano_height);
  }
  c.rank_orders = toml_get<bool>(t, "rank_orders", c.rank_orders);
  c.rank_samples = toml_get<int>(t, "rank_samples", c.rank_samples);
  c.validate();
  return c;
}

}  // namespace

PipelineConfig PipelineConfig::from_toml_file(const fs::path& path) {
  if (!fs::exists(path)) throw InputError("config: file not found: " + path.string());
  try {
    return from_table(toml::parse_file(path.string()), path.parent_path());
  } catch (const toml::parse_error& e) {
    throw InputError("config: " + path.string() + ": " + std::string(e.description()));
  }
}

PipelineConfig PipelineConfig::from_toml_string(const std::string& text) {
  try {
    return from_table(toml::parse(text), {});
  } catch (const toml::parse_error& e) {
    throw InputError("config: " + std::string(e.description()));
  }
}

// ------------------------------------------------------------ helpers

json bank_to_json(const MemoryBank& bank) {
  json entries = json::array();
  for (const auto& e : bank.entries) {
    entries.push_back({{"tag", to_string(e.tag)}, {"camera", io::camera_to_json(e.view())}, {"image", e.frame.image_path}});
  }
  return {{"stride", bank.stride},
          {"size", bank.size()},
          {"initial", bank.count(SourceTag::Initial)},
          {"panorama", bank.count(SourceTag::Panorama)},
          {"generated", bank.count(SourceTag::Generated)},
          {"entries", entries}};
}

PointCloud backproject_panorama(const RgbImage& pano, const EquirectDepth& range, const Vec3& center) {
  if (range.size() == 0) throw InputError("panorama depth is missing");
  if (range.rows() != pano.height || range.cols() != pano.width) {
    throw InputError("panorama depth and image differ in size");
  }
  const int w = pano.width, h = pano.height;
  std::vector<Vec3> pos;
  std::vector<Vec3> col;
  for (int y = 0; y < h; ++y) {
    const double lat = std::numbers::pi / 2.0 - (y + 0.5) / h * std::numbers::pi;
    for (int x = 0; x < w; ++x) {
      const double r = range(y, x);
      if (!(r > 0.0) || !std::isfinite(r)) continue;
      const double lon = (x + 0.5) / w * 2.0 * std::numbers::pi - std::numbers::pi;
      pos.push_back(center + r * equirect_direction(lon, lat));
      col.push_back(pano.at(x, y).cast<double>());
    }
  }
  PointCloud cloud(Points3(3, Eigen::Index(pos.size())), "world");
  Points3 colors(3, Eigen::Index(pos.size()));
  for (std::size_t i = 0; i < pos.size(); ++i) {
    cloud.positions.col(Eigen::Index(i)) = pos[i];
    colors.col(Eigen::Index(i)) = col[i];
  }
  cloud.colors = std::move(colors);
  return cloud;
}

namespace {

template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

std::string traj_dir_name(int k) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "traj_%02d", k);
  return buf;
}

std::string numbered(const char* pattern, int i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, i);
  return buf;
}

double median_valid_depth(const DepthMap& d) {
  std::vector<double> z;
  for (int v = 0; v < d.height(); ++v) {
    for (int u = 0; u < d.width(); ++u) {
      if (d.valid(v, u)) z.push_back(d.values(v, u));
    }
  }
  if (z.empty()) throw InputError("start view sees no geometry");
  auto mid = z.begin() + std::ptrdiff_t(z.size() / 2);
  std::nth_element(z.begin(), mid, z.end());
  if (z.size() % 2 == 1) return *mid;
  return 0.5 * (*mid + *std::max_element(z.begin(), mid));
}

CameraView to_frame(const CameraView& v, const Sim3d& t) {
  CameraView out = v;
  out.pose = transform_pose(t, v.pose);
  return out;
}

/// Everything the per-trajectory loop reads and updates.
struct RunState {
  PipelineConfig cfg;
  ScenePreset preset;
  std::string mode = "perspective";
  Frame start;
  DepthMap start_depth;
  PointCloud start_cloud;  // start view lifted into the world frame
  double median_depth = 1.0;
  MemoryBank bank;
  Cache3D cache;
  Sim3d cache_to_world;
  int next_generated_id = 0;
  std::vector<CameraView> gt_views;          // every generated view, world frame
  std::vector<CameraPose> pred_world_poses;  // matching reconstructed poses mapped to world
  std::vector<double> induced_noise_sq;      // per trajectory, world units²
  std::vector<Eigen::Index> induced_noise_counts;
  json trajectories = json::array();
  json cache_manifest = json::array();
  PointCloud extra_gt;  // surfaces only the panorama saw
  json ranking;
};

void write_cache_generation(RunState& s) {
  const fs::path dir = s.cfg.out_dir / "cache";
  fs::create_directories(dir);
  const std::string file = numbered("gen_%02d.ply", s.cache.generation);
  io::write_ply(dir / file, s.cache.global_cloud);
  s.cache_manifest.push_back({{"generation", s.cache.generation},
                              {"points", s.cache.global_cloud.size()},
                              {"voxel", s.cache.voxel},
                              {"alignment", io::transform_to_json(s.cache.last_alignment)},
                              {"file", "cache/" + file}});
  io::write_json(dir / "manifest.json", {{"cache_to_world", io::transform_to_json(s.cache_to_world)},
                                          {"generations", s.cache_manifest}});
}

void run_trajectory(RunState& s, int k, TrajectoryKind kind, GeneratorPort& generator,
                    ReconstructorPort& reconstructor) {
  const PipelineConfig& cfg = s.cfg;
  const fs::path dir = cfg.out_dir / traj_dir_name(k);
  fs::create_directories(dir);
  json rep = {{"index", k}, {"kind", to_string(kind)}};

  const TrajectorySpec spec = TrajectorySpec::defaults(kind, cfg.frames);
  const auto views = stage("synthesize", [&] { return synthesize(spec, s.start.view, s.median_depth); });
  rep["frames"] = views.size();
  rep["angle_deg"] = spec.effective_angle_deg();

  const GGMCondition ggm = stage("ggm", [&] { return assemble_ggm(s.start_cloud, s.cache, s.cache_to_world); });
  rep["ggm"] = {{"reference_points", ggm.reference_points.size()},
                {"auxiliary_points", ggm.auxiliary_points.size()},
                {"combined_points", ggm.combined.size()}};

  RetrievalOptions ropt = retrieval_defaults(s.median_depth);
  ropt.samples = cfg.retrieval_samples;
  ropt.seed = cfg.retrieval_seed;
  ropt.overlap_floor = cfg.overlap_floor;
  const RetrievalPlan plan = stage("retrieve", [&] { return plan_retrieval(views, s.bank, ropt); });

  GenerateRequest req;
  req.trajectory_index = k;
  req.start = s.start;
  req.trajectory = views;
  req.condition = ggm;
  req.plan = plan;
  stage("pointmap", [&] {
    const Sim3d to_cache = s.cache_to_world.inverse();
    json pairs = json::array();
    double overlap_sum = 0.0;
    int attached = 0;
    for (const auto& p : plan.pairs) {
      json pj = {{"target_index", p.target_index}, {"overlap", p.overlap}};
      if (!p.bank_index) {
        req.references.emplace_back(std::nullopt);
        pj["bank_index"] = nullptr;
        pairs.push_back(pj);
        continue;
      }
      const BankEntry& entry = s.bank.entries[std::size_t(*p.bank_index)];
      req.references.emplace_back(entry.frame);
      pj["bank_index"] = *p.bank_index;
      pj["reference_tag"] = to_string(entry.tag);
      pj["reference_frame_id"] = entry.view().frame_id;
      overlap_sum += p.overlap;
      ++attached;
      if (!s.cache.empty()) {
        auto [pt, pr] = make_pointmap_pair(to_frame(views[std::size_t(p.target_index)], to_cache),
                                           to_frame(entry.view(), to_cache), s.cache);
        if (cfg.write_frames) {
          io::write_png(dir / numbered("pointmap_target_%04d.png", p.target_index), pt.rgb);
          io::write_png(dir / numbered("pointmap_reference_%04d.png", p.target_index), pr.rgb);
        }
        req.target_pointmaps.push_back(std::move(pt));
        req.reference_pointmaps.push_back(std::move(pr));
      }
      pairs.push_back(pj);
    }
    io::write_json(dir / "plan.json", {{"F", plan.F}, {"num_targets", plan.num_targets}, {"pairs", pairs}});
    rep["retrieval"] = {{"F", plan.F},
                        {"attached", attached},
                        {"mean_overlap", attached > 0 ? overlap_sum / attached : 0.0},
                        {"pointmap_pairs", req.target_pointmaps.size()}};
    return 0;
  });

  const GeneratedClip clip = stage("generate", [&] {
    GeneratedClip c = generator.generate(req);
    c.validate(views.size());
    return c;
  });
  if (cfg.write_frames) stage("write", [&] { write_clip(dir, clip, views); return 0; });

  stage("bank", [&] {
    std::vector<Frame> frames;
    frames.reserve(views.size());
    for (std::size_t i = 0; i < views.size(); ++i) {
      Frame f;
      f.view = views[i];
      f.view.frame_id = s.next_generated_id + int(i);
      f.image = std::make_shared<const RgbImage>(clip.frames[i]);
      f.image_path = traj_dir_name(k) + "/" + numbered("frame_%04d.png", int(i));
      frames.push_back(std::move(f));
    }
    s.bank = bank_insert(s.bank, frames, SourceTag::Generated);
    s.next_generated_id += int(views.size());
    return 0;
  });
  rep["bank_size"] = s.bank.size();

  const Reconstruction recon =
      stage("reconstruct", [&] { return reconstructor.reconstruct(clip.frames, clip.depths, views, k); });
  rep["recon_points"] = recon.cloud.size();

  stage("cache", [&] {
    if (recon.first_frame_points != Eigen::Index(recon.first_frame_pixels.size())) {
      throw InputError("reconstruction: first-frame pixel list does not match its point count");
    }
    std::vector<CameraView> recon_views = views;
    for (std::size_t i = 0; i < views.size(); ++i) recon_views[i].pose = recon.poses[i];
    const PointCloud anchor = backproject(clip.depths.front(), views.front());
    const auto anchor_pixels = valid_pixel_indices(clip.depths.front());
    const IndexPairs matched = match_pixel_indices(recon.first_frame_pixels, anchor_pixels);
    const PointCloud recon_first(recon.cloud.positions.leftCols(recon.first_frame_points), "reconstruction");

    Sim3d recon_to_cache;
    Eigen::Index pair_count = 0;
    if (s.cache.empty()) {
      // first clip defines the cache frame; its anchor fixes cache → world
      s.cache_to_world = align_by_anchor(recon_first, anchor, matched, true);
      if (cfg.voxel > 0.0) s.cache.voxel = cfg.voxel / s.cache_to_world.scale;
      s.cache = cache_update(s.cache, recon.cloud, {}, recon_views);
      recon_to_cache = Sim3d::identity();
      pair_count = Eigen::Index(matched.size());
    } else {
      const Sim3d to_cache = s.cache_to_world.inverse();
      const PointHits hits = render_point_hits(to_frame(views.front(), to_cache), s.cache.global_cloud);
      OverlapPairs overlap;
      overlap.source.resize(3, Eigen::Index(matched.size()));
      overlap.target.resize(3, Eigen::Index(matched.size()));
      const int w = clip.depths.front().width();
      for (const auto& [i, j] : matched) {
        const Eigen::Index pix = anchor_pixels[std::size_t(j)];
        if (!hits.valid(pix / w, pix % w)) continue;
        overlap.source.col(pair_count) = recon.cloud.positions.col(i);
        overlap.target.col(pair_count) = to_cache.apply_point(anchor.positions.col(j));
        ++pair_count;
      }
      overlap.source.conservativeResize(3, pair_count);
      overlap.target.conservativeResize(3, pair_count);
      s.cache = cache_update(s.cache, recon.cloud, overlap, recon_views);
      recon_to_cache = s.cache.last_alignment;
    }
    const Sim3d recon_to_world = s.cache_to_world * recon_to_cache;
    for (std::size_t i = 0; i < views.size(); ++i) {
      s.pred_world_poses.push_back(transform_pose(recon_to_world, recon.poses[i]));
      s.gt_views.push_back(views[i]);
    }
    const double noise_world = recon.induced_noise_rms * recon_to_world.scale;
    s.induced_noise_sq.push_back(noise_world * noise_world * double(recon.cloud.size()));
    s.induced_noise_counts.push_back(recon.cloud.size());
    const PointCloud aligned_first = transformed(recon_first, recon_to_world);
    Eigen::Index n_anchor = 0;
    double sq = 0.0;
    for (const auto& [i, j] : matched) {
      sq += (aligned_first.positions.col(i) - anchor.positions.col(j)).squaredNorm();
      ++n_anchor;
    }
    rep["cache"] = {{"generation", s.cache.generation},
                    {"points", s.cache.global_cloud.size()},
                    {"overlap_pairs", pair_count},
                    {"alignment", io::transform_to_json(s.cache.last_alignment)},
                    {"anchor_rms", n_anchor > 0 ? std::sqrt(sq / double(n_anchor)) : 0.0},
                    {"induced_noise_rms", noise_world}};
    write_cache_generation(s);
    return 0;
  });

  s.trajectories.push_back(rep);
}

PipelineResult evaluate(RunState& s) {
  PipelineResult res;
  const PipelineConfig& cfg = s.cfg;
  stage("evaluate", [&] {
    res.cache = s.cache;
    res.bank = s.bank;
    res.cache_to_world = s.cache_to_world;
    res.merged_world = transformed(s.cache.global_cloud, s.cache_to_world, "world");

    // ground truth: exact lifts of the start view, every generated view and any panorama surface
    std::vector<PointCloud> parts{s.start_cloud};
    for (const auto& v : s.gt_views) parts.push_back(backproject(s.preset.scene.render(v).depth, v));
    if (!s.extra_gt.empty()) parts.push_back(s.extra_gt);
    Eigen::Index total = 0;
    for (const auto& p : parts) total += p.size();
    Points3 gt(3, total);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
      gt.middleCols(at, p.size()) = p.positions;
      at += p.size();
    }
    res.ground_truth = PointCloud(std::move(gt), "world");

    Sim3d refine = Sim3d::identity();
    json icp_json = nullptr;
    if (cfg.icp_refine) {
      const IcpResult icp = icp_scale_refine(res.merged_world, res.ground_truth, Sim3d::identity());
      refine = icp.transform;
      res.merged_world = transformed(res.merged_world, refine, "world");
      icp_json = {{"transform", io::transform_to_json(refine)},
                  {"iterations", icp.iterations},
                  {"converged", icp.converged},
                  {"final_rms", icp.residuals.empty() ? 0.0 : icp.residuals.back()}};
    }

    const double voxel_world = s.cache.voxel * s.cache_to_world.scale * refine.scale;
    double sq = 0.0;
    Eigen::Index cnt = 0;
    for (std::size_t i = 0; i < s.induced_noise_sq.size(); ++i) {
      sq += s.induced_noise_sq[i];
      cnt += s.induced_noise_counts[i];
    }
    const double noise_rms = cnt > 0 ? std::sqrt(sq / double(cnt)) * refine.scale : 0.0;
    std::string rule = "configured";
    double threshold = cfg.f1_threshold;
    if (!(threshold > 0.0)) {
      if (noise_rms > 0.0) {
        threshold = 3.0 * noise_rms;
        rule = "3 x induced noise rms";
      } else {
        threshold = 2.0 * voxel_world;
        rule = "2 x voxel";
      }
    }
    std::vector<double> sweep = cfg.auc_thresholds;
    if (sweep.empty()) {
      for (double m : {0.5, 1.0, 2.0, 4.0, 8.0}) sweep.push_back(m * voxel_world);
    }
    res.pcd = pcd_f1(res.merged_world, res.ground_truth, threshold);
    res.auc = pcd_auc(res.merged_world, res.ground_truth, sweep);
    const PcdMetrics at_two_voxels = pcd_f1(res.merged_world, res.ground_truth, 2.0 * voxel_world);

    std::vector<CameraPose> gt_poses;
    gt_poses.reserve(s.gt_views.size());
    for (const auto& v : s.gt_views) gt_poses.push_back(v.pose);
    res.cameras = cam_metrics(s.pred_world_poses, gt_poses);

    const fs::path out = cfg.out_dir;
    io::write_ply(out / "merged.ply", res.merged_world);
    if (cfg.write_gt) io::write_ply(out / "gt.ply", res.ground_truth);
    io::write_json(out / "bank.json", bank_to_json(s.bank));
    {
      json poses = json::array();
      for (std::size_t i = 0; i < s.gt_views.size(); ++i) {
        CameraView v = s.gt_views[i];
        v.pose = s.pred_world_poses[i];
        poses.push_back(io::camera_to_json(v));
      }
      io::write_json(out / "pred_cameras.json", poses);
    }

    json& r = res.report;
    r["mode"] = s.mode;
    r["scene"] = s.preset.name;
    r["config"] = cfg.to_json();
    r["median_depth"] = s.median_depth;
    r["trajectories"] = s.trajectories;
    r["cache_to_world"] = io::transform_to_json(s.cache_to_world);
    r["cache"] = {{"generation", s.cache.generation},
                  {"points", s.cache.global_cloud.size()},
                  {"voxel", s.cache.voxel},
                  {"voxel_world", voxel_world},
                  {"contributing_views", s.cache.contributing_views.size()}};
    r["bank"] = {{"size", s.bank.size()},
                 {"initial", s.bank.count(SourceTag::Initial)},
                 {"panorama", s.bank.count(SourceTag::Panorama)},
                 {"generated", s.bank.count(SourceTag::Generated)}};
    r["pcd"] = {{"threshold", threshold},
                {"threshold_rule", rule},
                {"precision", res.pcd.precision},
                {"recall", res.pcd.recall},
                {"f1", res.pcd.f1},
                {"f1_at_2_voxels", at_two_voxels.f1},
                {"induced_noise_rms", noise_rms},
                {"auc", res.auc},
                {"auc_thresholds", sweep},
                {"pred_points", res.merged_world.size()},
                {"gt_points", res.ground_truth.size()},
                {"icp", icp_json}};
    r["cameras"] = {{"frames", s.gt_views.size()},
                    {"rot_err_deg", res.cameras.rot_err_deg},
                    {"trans_err", res.cameras.trans_err},
                    {"ate", res.cameras.ate},
                    {"centers_degenerate", res.cameras.centers_degenerate},
                    {"alignment", io::transform_to_json(res.cameras.alignment)}};
    if (!s.ranking.is_null()) r["ranking"] = s.ranking;
    json artifacts = {{"merged", "merged.ply"},
                      {"bank", "bank.json"},
                      {"cache_manifest", "cache/manifest.json"},
                      {"pred_cameras", "pred_cameras.json"}};
    if (cfg.write_gt) artifacts["gt"] = "gt.ply";
    r["artifacts"] = artifacts;
    io::write_json(out / "report.json", r);
    return 0;
  });
  return res;
}

PipelineResult run_loop(RunState& s, GeneratorPort& generator, ReconstructorPort& reconstructor) {
  int k = 0;
  try {
    for (; k < int(s.cfg.order.size()); ++k) {
      run_trajectory(s, k, s.cfg.order[std::size_t(k)], generator, reconstructor);
    }
    return evaluate(s);
  } catch (const StageError& e) {
    std::error_code ec;
    fs::create_directories(s.cfg.out_dir, ec);
    std::ofstream f(s.cfg.out_dir / "failure.json");
    f << json{{"stage", e.stage()},
              {"message", e.what()},
              {"trajectory", k},
              {"completed_trajectories", s.trajectories}}
             .dump(2)
      << "\n";
    throw;
  }
}

struct Ports {
  std::unique_ptr<GeneratorPort> generator;
  std::unique_ptr<ReconstructorPort> reconstructor;
};

Ports make_ports(const PipelineConfig& cfg, const SyntheticScene& scene) {
  Ports p;
  if (cfg.generator == "replay") p.generator = std::make_unique<ReplayGenerator>(cfg.replay_dir);
  else p.generator = std::make_unique<OracleGenerator>(scene);
  if (cfg.reconstructor == "noisy") p.reconstructor = std::make_unique<NoisyReconstructor>(cfg.noise);
  else p.reconstructor = std::make_unique<OracleReconstructor>();
  return p;
}

RunState prepare(const PipelineConfig& cfg) {
  RunState s;
  stage("config", [&] {
    cfg.validate();
    s.cfg = cfg;
    s.preset = load_scene(cfg.scene, cfg.width, cfg.height);
    fs::create_directories(cfg.out_dir);
    return 0;
  });
  s.bank.stride = cfg.bank_stride;
  return s;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg, GeneratorPort& generator, ReconstructorPort& reconstructor) {
  RunState s = prepare(cfg);
  stage("start", [&] {
    const Render r = s.preset.scene.render(s.preset.start);
    s.start.view = s.preset.start;
    s.start.image = std::make_shared<const RgbImage>(r.image);
    s.start.image_path = "start.png";
    s.start_depth = r.depth;
    s.median_depth = median_valid_depth(r.depth);
    s.start_cloud = backproject(r.depth, s.start.view, r.image);
    io::write_png(cfg.out_dir / "start.png", r.image);
    s.bank = bank_insert(s.bank, {s.start}, SourceTag::Initial);
    return 0;
  });
  return run_loop(s, generator, reconstructor);
}

PipelineResult run_pipeline(const PipelineConfig& cfg) {
  const ScenePreset preset = stage("config", [&] {
    cfg.validate();
    return load_scene(cfg.scene, cfg.width, cfg.height);
  });
  Ports ports = make_ports(cfg, preset.scene);
  return run_pipeline(cfg, *ports.generator, *ports.reconstructor);
}

PipelineResult run_panorama(const PipelineConfig& cfg, const RgbImage& pano, const EquirectDepth& range) {
  RunState s = prepare(cfg);
  s.mode = "panorama";
  Ports ports = make_ports(cfg, s.preset.scene);
  stage("panorama", [&] {
    if (range.size() == 0) throw InputError("panorama depth is missing");
    if (!s.preset.pano_center.isZero()) throw InputError("panorama runs need the scene's pano center at the origin");
    PanoSplitOptions opt;
    opt.out_width = cfg.width;
    opt.out_height = cfg.height;
    const auto splits = pano_to_perspective(pano, opt);
    const auto grid = default_pano_grid();
    std::vector<Frame> frames;
    std::vector<CameraView> split_views;
    int start_index = -1;
    for (std::size_t i = 0; i < splits.size(); ++i) {
      Frame f;
      f.view = splits[i].view;
      f.image = std::make_shared<const RgbImage>(splits[i].image);
      f.image_path = "pano/" + numbered("split_%02d.png", int(i));
      split_views.push_back(f.view);
      frames.push_back(std::move(f));
      if (grid[i].first == 0.0 && grid[i].second == 0.0) start_index = int(i);
    }
    fs::create_directories(cfg.out_dir / "pano");
    for (std::size_t i = 0; i < splits.size(); ++i) io::write_png(cfg.out_dir / frames[i].image_path, splits[i].image);
    io::write_png(cfg.out_dir / "pano" / "pano.png", pano);
    io::write_pfm(cfg.out_dir / "pano" / "range.pfm", DepthMap(range));
    s.bank = bank_insert(s.bank, frames, SourceTag::Panorama);

    s.start = frames[std::size_t(start_index)];
    s.start_depth = pano_depth_to_perspective(range, s.start.view);
    s.median_depth = median_valid_depth(s.start_depth);
    s.start_cloud = backproject(s.start_depth, s.start.view, *s.start.image);

    const PointCloud pano_cloud = backproject_panorama(pano, range);
    Cache3D seed;
    if (cfg.voxel > 0.0) seed.voxel = cfg.voxel;
    s.cache = cache_update(seed, pano_cloud, {}, split_views);
    s.cache.generation = 0;  // the seed is generation 0, trajectories count from 1
    s.cache_to_world = Sim3d::identity();
    write_cache_generation(s);

    // exact surfaces seen from the center, for evaluation
    const PanoRender exact = s.preset.scene.render_panorama(Vec3::Zero(), pano.width, pano.height);
    s.extra_gt = backproject_panorama(exact.image, exact.range);

    if (cfg.rank_orders) {
      RankOptions ro;
      ro.retrieval = retrieval_defaults(s.median_depth);
      ro.retrieval.samples = cfg.rank_samples;
      ro.retrieval.seed = cfg.retrieval_seed;
      ro.retrieval.overlap_floor = cfg.overlap_floor;
      const auto orders = all_orders(cfg.frames);
      ro.update_bank = true;
      const auto updating = rank_orders(orders, s.bank, s.start.view, s.median_depth, ro);
      ro.update_bank = false;
      const auto pano_only = rank_orders(orders, s.bank, s.start.view, s.median_depth, ro);
      const auto order_json = [](const TrajectoryOrder& o) {
        json a = json::array();
        for (const auto& t : o) a.push_back(to_string(t.kind));
        return a;
      };
      json rows = json::array();
      for (const auto& o : updating) {
        double fixed = 0.0;
        for (const auto& p : pano_only) {
          if (order_json(p.order) == order_json(o.order)) fixed = p.score;
        }
        rows.push_back({{"order", order_json(o.order)}, {"score", o.score}, {"pano_only_score", fixed}});
      }
      s.ranking = {{"samples", cfg.rank_samples},
                   {"best_updating", updating.front().score},
                   {"best_pano_only", pano_only.front().score},
                   {"orders", rows}};
    }
    return 0;
  });
  return run_loop(s, *ports.generator, *ports.reconstructor);
}

PipelineResult run_panorama(const PipelineConfig& cfg) {
  const ScenePreset preset = stage("config", [&] {
    cfg.validate();
    return load_scene(cfg.scene, cfg.width, cfg.height);
  });
  const PanoRender pano = preset.scene.render_panorama(preset.pano_center, cfg.pano_width, cfg.pano_height);
  return run_panorama(cfg, pano.image, pano.range);
}

}  // namespace geomem
