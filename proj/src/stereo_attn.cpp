#include "geomem/stereo_attn.hpp"

#include "geomem/errors.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace geomem {

std::string to_string(GridRole role) {
  switch (role) {
    case GridRole::Target: return "target";
    case GridRole::Reference: return "reference";
    case GridRole::PointmapTarget: return "pointmap_target";
    case GridRole::PointmapReference: return "pointmap_reference";
    case GridRole::Stitched: return "stitched";
    case GridRole::Output: return "output";
  }
  return "target";
}

GridRole grid_role_from_string(const std::string& s) {
  for (GridRole r : {GridRole::Target, GridRole::Reference, GridRole::PointmapTarget, GridRole::PointmapReference,
                     GridRole::Stitched, GridRole::Output}) {
    if (to_string(r) == s) return r;
  }
  throw InputError("unknown grid role '" + s + "'");
}

bool FeatureGrid::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

FeatureGrid FeatureGrid::zeros_like(const FeatureGrid& g, GridRole role) {
  return FeatureGrid(g.frames, g.height, g.width, g.channels, role);
}

StitchedPair stitch(const FeatureGrid& z_tar, const FeatureGrid& z_ref, const FeatureGrid& pm_tar,
                    const FeatureGrid& pm_ref) {
  for (const FeatureGrid* g : {&z_ref, &pm_tar, &pm_ref}) {
    if (!g->same_shape(z_tar)) {
      std::ostringstream os;
      os << "stitch: grid " << g->frames << "x" << g->height << "x" << g->width << "x" << g->channels
         << " does not match target " << z_tar.frames << "x" << z_tar.height << "x" << z_tar.width << "x"
         << z_tar.channels;
      throw InputError(os.str());
    }
  }
  const int f_count = z_tar.frames, h_count = z_tar.height, w_count = z_tar.width, c_count = z_tar.channels;
  StitchedPair out{FeatureGrid(f_count, h_count, 2 * w_count, c_count, GridRole::Stitched),
                   FeatureGrid(f_count, h_count, 2 * w_count, c_count, GridRole::Stitched),
                   FeatureGrid(f_count, h_count, 2 * w_count, c_count, GridRole::Stitched)};
  for (int f = 0; f < f_count; ++f) {
    for (int h = 0; h < h_count; ++h) {
      for (int w = 0; w < w_count; ++w) {
        for (int c = 0; c < c_count; ++c) {
          out.stitched.at(f, h, w, c) = z_tar.at(f, h, w, c);
          out.stitched.at(f, h, w + w_count, c) = z_ref.at(f, h, w, c);
          out.pointmap_latent.at(f, h, w, c) = pm_tar.at(f, h, w, c);
          out.pointmap_latent.at(f, h, w + w_count, c) = pm_ref.at(f, h, w, c);
        }
      }
    }
  }
  for (std::size_t i = 0; i < out.ssm_input.data.size(); ++i) {
    out.ssm_input.data[i] = out.stitched.data[i] + out.pointmap_latent.data[i];
  }
  return out;
}

AttentionWeights AttentionWeights::random(int channels, int key_dim, int out_channels, Rng& rng, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  auto draw = [&](int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return m;
  };
  return {draw(channels, key_dim), draw(channels, key_dim), draw(channels, out_channels)};
}

std::vector<FeatureGrid> ssm_attention(const std::vector<StitchedPair>& pairs, const AttentionWeights& weights) {
  if (pairs.empty()) return {};
  const FeatureGrid& first = pairs.front().ssm_input;
  const int channels = first.channels;
  if (weights.query.rows() != channels || weights.key.rows() != channels || weights.value.rows() != channels ||
      weights.query.cols() != weights.key.cols()) {
    throw InputError("ssm_attention: projection shapes do not match the feature channels");
  }
  if (first.width % 2 != 0) throw InputError("ssm_attention: stitched width must be even");
  for (const auto& p : pairs) {
    if (!p.ssm_input.same_shape(first)) throw InputError("ssm_attention: all pairs must share one shape");
  }

  const int half = first.width / 2;
  const auto out_channels = static_cast<int>(weights.value.cols());
  const double inv_sqrt_d = 1.0 / std::sqrt(double(weights.query.cols()));

  // [B, F, H, 2W, C] -> [B·F, H·2W, C]: one independent sequence per (pair, frame)
  std::vector<Eigen::Map<const TokenMatrix>> sequences;
  sequences.reserve(pairs.size() * std::size_t(first.frames));
  for (const auto& p : pairs) {
    for (int f = 0; f < first.frames; ++f) sequences.push_back(p.ssm_input.token_matrix(f));
  }

  std::vector<FeatureGrid> out(pairs.size(), FeatureGrid(first.frames, first.height, half, out_channels, GridRole::Output));
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const auto& x = sequences[s];
    const Eigen::MatrixXd q = x * weights.query;
    const Eigen::MatrixXd k = x * weights.key;
    const Eigen::MatrixXd v = x * weights.value;
    Eigen::MatrixXd scores = (q * k.transpose()) * inv_sqrt_d;
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
      const double m = scores.row(r).maxCoeff();
      scores.row(r) = (scores.row(r).array() - m).exp();
      scores.row(r) /= scores.row(r).sum();
    }
    const Eigen::MatrixXd attended = scores * v;

    FeatureGrid& grid = out[s / std::size_t(first.frames)];
    const int f = static_cast<int>(s % std::size_t(first.frames));
    for (int h = 0; h < first.height; ++h) {
      for (int w = 0; w < half; ++w) {
        const Eigen::Index token = Eigen::Index(h) * first.width + w;
        for (int c = 0; c < out_channels; ++c) grid.at(f, h, w, c) = attended(token, c);
      }
    }
  }
  return out;
}

PointHits render_point_hits(const CameraView& view, const PointCloud& cloud) {
  const auto& k = view.intrinsics;
  PointHits hits;
  hits.width = k.width;
  hits.height = k.height;
  hits.world = Points3::Zero(3, Eigen::Index(k.width) * k.height);
  hits.valid = MaskGrid::Constant(k.height, k.width, false);
  DepthGrid zbuf = DepthGrid::Constant(k.height, k.width, std::numeric_limits<double>::infinity());

  const Mat3 rt = view.pose.rotation.transpose();
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    const Vec3 pc = rt * (cloud.positions.col(i) - view.pose.translation);
    if (!(pc.z() > 1e-12)) continue;
    // pixel whose footprint [u, u+1) × [v, v+1) in homogeneous coordinates contains the projection
    const double uh = k.fx * pc.x() / pc.z() + k.cx;
    const double vh = k.fy * pc.y() / pc.z() + k.cy;
    if (!(uh >= 0.0 && uh < k.width && vh >= 0.0 && vh < k.height)) continue;
    const int u = static_cast<int>(std::floor(uh));
    const int v = static_cast<int>(std::floor(vh));
    if (pc.z() < zbuf(v, u)) {
      zbuf(v, u) = pc.z();
      hits.valid(v, u) = true;
      hits.world.col(Eigen::Index(v) * k.width + u) = cloud.positions.col(i);
    }
  }
  return hits;
}

namespace {

struct Range {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void add(const PointHits& h) {
    for (int v = 0; v < h.height; ++v) {
      for (int u = 0; u < h.width; ++u) {
        if (!h.valid(v, u)) continue;
        const Vec3 p = h.world.col(Eigen::Index(v) * h.width + u);
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
      }
    }
  }
};

PointMapImage colorize(const PointHits& h, const Range& range) {
  PointMapImage pm;
  pm.rgb = RgbImage(h.width, h.height);
  pm.valid = h.valid;
  for (int v = 0; v < h.height; ++v) {
    for (int u = 0; u < h.width; ++u) {
      if (!h.valid(v, u)) continue;
      const Vec3 p = h.world.col(Eigen::Index(v) * h.width + u);
      Eigen::Vector3f c;
      for (int a = 0; a < 3; ++a) {
        const double extent = range.hi[a] - range.lo[a];
        c[a] = extent > 0.0 ? static_cast<float>((p[a] - range.lo[a]) / extent) : 0.0f;
      }
      pm.rgb.set(u, v, c);
    }
  }
  return pm;
}

}  // namespace

std::pair<PointMapImage, PointMapImage> make_pointmap_pair(const CameraView& target, const CameraView& reference,
                                                           const Cache3D& cache) {
  const PointHits a = render_point_hits(target, cache.global_cloud);
  const PointHits b = render_point_hits(reference, cache.global_cloud);
  Range range;
  range.add(a);
  range.add(b);
  return {colorize(a, range), colorize(b, range)};
}

PointMapImage make_pointmap(const CameraView& view, const Cache3D& cache) {
  const PointHits h = render_point_hits(view, cache.global_cloud);
  Range range;
  range.add(h);
  return colorize(h, range);
}

FeatureGrid image_to_grid(const RgbImage& image, GridRole role) {
  FeatureGrid g(1, image.height, image.width, 3, role);
  for (int v = 0; v < image.height; ++v) {
    for (int u = 0; u < image.width; ++u) {
      const Eigen::Vector3f c = image.at(u, v);
      for (int ch = 0; ch < 3; ++ch) g.at(0, v, u, ch) = c[ch];
    }
  }
  return g;
}

FeatureGrid pointmap_to_grid(const PointMapImage& pm, GridRole role) { return image_to_grid(pm.rgb, role); }

}  // namespace geomem
