#pragma once

#include "geomem/geometry.hpp"
#include "geomem/point_cloud.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace geomem::io {

namespace fs = std::filesystem;
using nlohmann::json;

// Depth maps. Invalid pixels are written as 0 and masked again on read.
DepthMap read_pfm(const fs::path& path);
void write_pfm(const fs::path& path, const DepthMap& depth);

/// Row-major float32 grid at `path` with a JSON sidecar `path` + ".json" holding {width, height}.
DepthMap read_raw_depth(const fs::path& path);
void write_raw_depth(const fs::path& path, const DepthMap& depth);

/// Dispatch on extension: .pfm, otherwise raw + sidecar.
DepthMap read_depth(const fs::path& path);

// Cameras: {fx, fy, cx, cy, width, height, R: 9 floats row-major, t: 3 floats[, frame_id]}.
json camera_to_json(const CameraView& view);
CameraView camera_from_json(const json& j);
std::vector<CameraView> read_cameras(const fs::path& path);  // a single object or an array
void write_cameras(const fs::path& path, const std::vector<CameraView>& views);

// Similarity transforms: {scale, R: 9 floats row-major, t: 3 floats}.
json transform_to_json(const Sim3d& t);
Sim3d transform_from_json(const json& j);

// PLY with x, y, z [, red, green, blue]; reads ASCII and binary little-endian.
PointCloud read_ply(const fs::path& path);
void write_ply(const fs::path& path, const PointCloud& cloud, bool binary = true);

// 8-bit RGB PNG; channels map to [0,1].
RgbImage read_png(const fs::path& path);
void write_png(const fs::path& path, const RgbImage& image);

json read_json(const fs::path& path);
void write_json(const fs::path& path, const json& j);

}  // namespace geomem::io
