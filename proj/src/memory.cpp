#include "geomem/memory.hpp"

#include "geomem/alignment.hpp"
#include "geomem/errors.hpp"
#include "geomem/nn_index.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace geomem {

std::string to_string(SourceTag tag) {
  switch (tag) {
    case SourceTag::Initial: return "initial";
    case SourceTag::Panorama: return "panorama";
    case SourceTag::Generated: return "generated";
  }
  return "generated";
}

SourceTag source_tag_from_string(const std::string& s) {
  if (s == "initial") return SourceTag::Initial;
  if (s == "panorama") return SourceTag::Panorama;
  if (s == "generated") return SourceTag::Generated;
  throw InputError("unknown source tag '" + s + "'");
}

std::size_t MemoryBank::count(SourceTag tag) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [tag](const BankEntry& e) { return e.tag == tag; }));
}

MemoryBank bank_insert(const MemoryBank& bank, const std::vector<Frame>& frames, SourceTag tag) {
  if (bank.stride < 1) throw InputError("bank_insert: stride must be >= 1");
  std::set<std::pair<SourceTag, int>> seen;
  for (const auto& e : bank.entries) seen.emplace(e.tag, e.view().frame_id);

  const std::size_t step = tag == SourceTag::Generated ? static_cast<std::size_t>(bank.stride) : 1;
  MemoryBank out = bank;
  for (std::size_t i = 0; i < frames.size(); i += step) {
    const Frame& f = frames[i];
    if (!seen.emplace(tag, f.view.frame_id).second) {
      throw DuplicateError("bank_insert: duplicate entry (" + to_string(tag) + ", " + std::to_string(f.view.frame_id) +
                           ")");
    }
    out.entries.push_back({f, tag});
  }
  return out;
}

Cache3D cache_update(const Cache3D& cache, const PointCloud& new_cloud, const OverlapPairs& overlap,
                     const std::vector<CameraView>& views) {
  new_cloud.validate();
  Cache3D out = cache;
  if (cache.empty() && cache.generation == 0) {
    out.voxel = cache.voxel > 0.0 ? cache.voxel : default_voxel_size(new_cloud);
    out.global_cloud = voxel_downsample(new_cloud, out.voxel);
    out.last_alignment = Sim3d::identity();
    out.contributing_views.insert(out.contributing_views.end(), views.begin(), views.end());
    out.generation = cache.generation + 1;
    return out;
  }

  if (overlap.size() < 3 || overlap.target.cols() != overlap.size()) {
    throw AlignmentError("cache_update: need at least 3 overlap pairs to align into the cache frame (got " +
                         std::to_string(overlap.size()) + ")");
  }
  Sim3d to_cache;
  try {
    to_cache = geomem::umeyama(overlap.source, overlap.target, true);
  } catch (const DegenerateInputError& e) {
    throw AlignmentError(std::string("cache_update: ") + e.what());
  }
  const double voxel = cache.voxel > 0.0 ? cache.voxel : default_voxel_size(cache.global_cloud);
  out.voxel = voxel;
  out.global_cloud = merge(cache.global_cloud, new_cloud, to_cache, voxel);
  out.last_alignment = to_cache;
  for (const auto& v : views) {
    CameraView aligned = v;
    aligned.pose = transform_pose(to_cache, v.pose);
    out.contributing_views.push_back(aligned);
  }
  out.generation = cache.generation + 1;
  return out;
}

GGMCondition assemble_ggm(const PointCloud& reference, const Cache3D& cache, const Sim3d& align, double dedup_radius) {
  GGMCondition cond;
  cond.reference_points = reference;
  cond.auxiliary_points.frame_label = reference.frame_label;
  if (!cache.empty()) {
    const PointCloud aligned = transformed(cache.global_cloud, align, reference.frame_label);
    const double radius = dedup_radius > 0.0 ? dedup_radius : cache.voxel;
    std::vector<Eigen::Index> keep;
    keep.reserve(static_cast<std::size_t>(aligned.size()));
    if (reference.empty() || !(radius > 0.0)) {
      keep.resize(static_cast<std::size_t>(aligned.size()));
      std::iota(keep.begin(), keep.end(), Eigen::Index(0));
    } else {
      const KdTree tree(reference.positions);
      const double r2 = radius * radius;
      for (Eigen::Index i = 0; i < aligned.size(); ++i) {
        if (tree.nearest(aligned.positions.col(i)).squared_distance > r2) keep.push_back(i);
      }
    }
    cond.auxiliary_points = select(aligned, keep);
    // colors only survive concatenation when both halves carry them
    if (reference.has_colors() != cond.auxiliary_points.has_colors()) cond.auxiliary_points.colors.reset();
  }
  cond.combined = concatenate(reference, cond.auxiliary_points);
  if (cond.auxiliary_points.empty()) cond.combined = reference;
  return cond;
}

// ------------------------------------------------------------ masking augmentations

namespace {

Eigen::Index clamp_count(double target, Eigen::Index total, double lo, double hi) {
  const auto lo_count = static_cast<Eigen::Index>(std::ceil(lo * double(total) - 1e-9));
  const auto hi_count = static_cast<Eigen::Index>(std::floor(hi * double(total) + 1e-9));
  auto k = static_cast<Eigen::Index>(std::llround(target));
  if (lo_count <= hi_count) k = std::clamp(k, lo_count, hi_count);
  return std::clamp<Eigen::Index>(k, 0, total);
}

}  // namespace

MaskRecord apply_random_pixel_mask(DepthMap& depth, double fraction, Rng& rng, double min_fraction,
                                   double max_fraction) {
  std::vector<Eigen::Index> valid = valid_pixel_indices(depth);
  const auto n = static_cast<Eigen::Index>(valid.size());
  const Eigen::Index drop = clamp_count(fraction * double(n), n, min_fraction, max_fraction);
  // partial Fisher-Yates: the first `drop` slots become a uniform random subset
  for (Eigen::Index i = 0; i < drop; ++i) {
    std::uniform_int_distribution<Eigen::Index> pick(i, n - 1);
    std::swap(valid[std::size_t(i)], valid[std::size_t(pick(rng))]);
    const Eigen::Index p = valid[std::size_t(i)];
    depth.invalidate(static_cast<int>(p / depth.width()), static_cast<int>(p % depth.width()));
  }
  return {MaskKind::RandomPixels, fraction, n > 0 ? double(drop) / double(n) : 0.0, drop};
}

MaskRecord apply_rectangle_mask(DepthMap& depth, double area_fraction, Rng& rng, double min_fraction,
                                double max_fraction) {
  const int width = depth.width();
  const int height = depth.height();
  const double area = double(width) * double(height);
  const double target = area_fraction * area;

  std::uniform_real_distribution<double> log_aspect(std::log(0.5), std::log(2.0));
  const double aspect = std::exp(log_aspect(rng));  // height / width
  int rect_h = std::clamp(static_cast<int>(std::lround(std::sqrt(target * aspect))), 1, height);
  int rect_w = std::clamp(static_cast<int>(std::lround(target / rect_h)), 1, width);
  // keep the realized fraction inside [min, max] despite integer rounding
  if (rect_w * double(rect_h) < min_fraction * area) {
    rect_w = std::min(width, static_cast<int>(std::ceil(min_fraction * area / rect_h - 1e-9)));
    if (rect_w * double(rect_h) < min_fraction * area) {
      rect_h = std::min(height, static_cast<int>(std::ceil(min_fraction * area / rect_w - 1e-9)));
    }
  }
  if (rect_w * double(rect_h) > max_fraction * area) {
    rect_w = std::max(1, static_cast<int>(std::floor(max_fraction * area / rect_h + 1e-9)));
  }

  std::uniform_int_distribution<int> x_pick(0, width - rect_w);
  std::uniform_int_distribution<int> y_pick(0, height - rect_h);
  const int x0 = x_pick(rng);
  const int y0 = y_pick(rng);
  depth.valid.block(y0, x0, rect_h, rect_w).setConstant(false);
  const Eigen::Index occluded = Eigen::Index(rect_w) * rect_h;
  return {MaskKind::Rectangle, area_fraction, double(occluded) / area, occluded};
}

int sample_aux_frame_count(Rng& rng) { return std::uniform_int_distribution<int>(1, 4)(rng); }

AugmentResult ggm_train_augment(const std::vector<AuxFrame>& frames, std::uint64_t seed, const AugmentOptions& options) {
  if (frames.empty()) throw InputError("ggm_train_augment: need at least one auxiliary frame");
  if (frames.size() > 4) throw InputError("ggm_train_augment: at most 4 auxiliary frames are sampled per example");
  Rng rng(seed);
  std::bernoulli_distribution pick_pixels(options.p_random_pixels);
  std::uniform_real_distribution<double> pixel_frac(options.pixel_fraction_min, options.pixel_fraction_max);
  std::uniform_real_distribution<double> rect_frac(options.rect_fraction_min, options.rect_fraction_max);

  AugmentResult result;
  result.cloud.frame_label = "reference";
  for (const auto& f : frames) {
    DepthMap depth = f.depth;
    if (pick_pixels(rng)) {
      const double p = pixel_frac(rng);
      result.records.push_back(
          apply_random_pixel_mask(depth, p, rng, options.pixel_fraction_min, options.pixel_fraction_max));
    } else {
      const double a = rect_frac(rng);
      result.records.push_back(
          apply_rectangle_mask(depth, a, rng, options.rect_fraction_min, options.rect_fraction_max));
    }
    const PointCloud part = transformed(backproject(depth, f.view), options.world_to_reference, "reference");
    result.cloud = concatenate(result.cloud, part);
  }
  return result;
}

}  // namespace geomem
