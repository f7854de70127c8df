#include "geomem/io.hpp"

#include "geomem/errors.hpp"

#include <png.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace geomem::io {

namespace {

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw InputError("cannot open " + path.string() + " for reading");
  return in;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, mode);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  return out;
}

float byteswap_float(float f) {
  auto u = std::bit_cast<std::uint32_t>(f);
  u = (u >> 24) | ((u >> 8) & 0xFF00u) | ((u << 8) & 0xFF0000u) | (u << 24);
  return std::bit_cast<float>(u);
}

DepthGrid masked_values(const DepthMap& depth) {
  return depth.valid.select(depth.values, DepthGrid::Zero(depth.height(), depth.width()));
}

}  // namespace

DepthMap read_pfm(const fs::path& path) {
  auto in = open_in(path, std::ios::binary);
  std::string magic;
  int width = 0, height = 0;
  double scale = 0.0;
  in >> magic >> width >> height >> scale;
  if (magic != "Pf") throw InputError(path.string() + ": only single-channel PFM (Pf) is supported");
  if (width <= 0 || height <= 0 || scale == 0.0) throw InputError(path.string() + ": malformed PFM header");
  in.get();  // single whitespace byte before the raster
  const bool little = scale < 0.0;
  std::vector<float> raw(std::size_t(width) * std::size_t(height));
  in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size() * sizeof(float)));
  if (!in) throw InputError(path.string() + ": truncated PFM raster");
  const bool swap = (std::endian::native == std::endian::little) != little;

  DepthGrid values(height, width);
  for (int row = 0; row < height; ++row) {
    const int v = height - 1 - row;  // PFM stores rows bottom to top
    for (int u = 0; u < width; ++u) {
      float f = raw[std::size_t(row) * width + u];
      if (swap) f = byteswap_float(f);
      values(v, u) = f;
    }
  }
  return DepthMap(std::move(values));
}

void write_pfm(const fs::path& path, const DepthMap& depth) {
  auto out = open_out(path, std::ios::binary);
  out << "Pf\n" << depth.width() << " " << depth.height() << "\n-1.0\n";
  const DepthGrid values = masked_values(depth);
  std::vector<float> row(std::size_t(depth.width()));
  for (int v = depth.height() - 1; v >= 0; --v) {
    for (int u = 0; u < depth.width(); ++u) {
      float f = static_cast<float>(values(v, u));
      if constexpr (std::endian::native != std::endian::little) f = byteswap_float(f);
      row[std::size_t(u)] = f;
    }
    out.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size() * sizeof(float)));
  }
}

DepthMap read_raw_depth(const fs::path& path) {
  const json meta = read_json(fs::path(path.string() + ".json"));
  const int width = meta.at("width").get<int>();
  const int height = meta.at("height").get<int>();
  if (width <= 0 || height <= 0) throw InputError(path.string() + ": sidecar has non-positive size");
  auto in = open_in(path, std::ios::binary);
  std::vector<float> raw(std::size_t(width) * std::size_t(height));
  in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size() * sizeof(float)));
  if (!in) throw InputError(path.string() + ": raw grid shorter than sidecar size");
  DepthGrid values(height, width);
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) values(v, u) = raw[std::size_t(v) * width + u];
  }
  return DepthMap(std::move(values));
}

void write_raw_depth(const fs::path& path, const DepthMap& depth) {
  const DepthGrid values = masked_values(depth);
  std::vector<float> raw(std::size_t(depth.width()) * std::size_t(depth.height()));
  for (int v = 0; v < depth.height(); ++v) {
    for (int u = 0; u < depth.width(); ++u) raw[std::size_t(v) * depth.width() + u] = static_cast<float>(values(v, u));
  }
  auto out = open_out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size() * sizeof(float)));
  write_json(fs::path(path.string() + ".json"), json{{"width", depth.width()}, {"height", depth.height()}});
}

DepthMap read_depth(const fs::path& path) {
  return path.extension() == ".pfm" ? read_pfm(path) : read_raw_depth(path);
}

json camera_to_json(const CameraView& view) {
  const auto& k = view.intrinsics;
  const auto& r = view.pose.rotation;
  json j;
  j["fx"] = k.fx;
  j["fy"] = k.fy;
  j["cx"] = k.cx;
  j["cy"] = k.cy;
  j["width"] = k.width;
  j["height"] = k.height;
  j["R"] = {r(0, 0), r(0, 1), r(0, 2), r(1, 0), r(1, 1), r(1, 2), r(2, 0), r(2, 1), r(2, 2)};
  j["t"] = {view.pose.translation.x(), view.pose.translation.y(), view.pose.translation.z()};
  j["frame_id"] = view.frame_id;
  return j;
}

CameraView camera_from_json(const json& j) {
  try {
    CameraView view;
    auto& k = view.intrinsics;
    k.fx = j.at("fx").get<double>();
    k.fy = j.at("fy").get<double>();
    k.cx = j.at("cx").get<double>();
    k.cy = j.at("cy").get<double>();
    k.width = j.at("width").get<int>();
    k.height = j.at("height").get<int>();
    const auto r = j.at("R").get<std::vector<double>>();
    const auto t = j.at("t").get<std::vector<double>>();
    if (r.size() != 9 || t.size() != 3) throw InputError("camera JSON: R needs 9 values and t needs 3");
    view.pose.rotation = Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(r.data());
    view.pose.translation = Vec3(t[0], t[1], t[2]);
    view.frame_id = j.value("frame_id", 0);
    // Text files commonly carry rotations rounded to a few digits; snap those
    // back onto SO(3) before the strict check.
    const Mat3& rot = view.pose.rotation;
    const double ortho = (rot.transpose() * rot - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (ortho > 1e-12 && ortho < 1e-5 && rot.determinant() > 0.0) {
      Eigen::JacobiSVD<Mat3> svd(rot, Eigen::ComputeFullU | Eigen::ComputeFullV);
      view.pose.rotation = svd.matrixU() * svd.matrixV().transpose();
    }
    view.validate();
    return view;
  } catch (const json::exception& e) {
    throw InputError(std::string("camera JSON: ") + e.what());
  }
}

std::vector<CameraView> read_cameras(const fs::path& path) {
  const json j = read_json(path);
  std::vector<CameraView> views;
  if (j.is_array()) {
    for (const auto& item : j) views.push_back(camera_from_json(item));
  } else if (j.is_object() && j.contains("cameras")) {
    for (const auto& item : j.at("cameras")) views.push_back(camera_from_json(item));
  } else {
    views.push_back(camera_from_json(j));
  }
  return views;
}

void write_cameras(const fs::path& path, const std::vector<CameraView>& views) {
  json arr = json::array();
  for (const auto& v : views) arr.push_back(camera_to_json(v));
  write_json(path, arr);
}

json transform_to_json(const Sim3d& t) {
  const auto& r = t.rotation;
  return json{{"scale", t.scale},
              {"R", {r(0, 0), r(0, 1), r(0, 2), r(1, 0), r(1, 1), r(1, 2), r(2, 0), r(2, 1), r(2, 2)}},
              {"t", {t.translation.x(), t.translation.y(), t.translation.z()}}};
}

Sim3d transform_from_json(const json& j) {
  try {
    Sim3d t;
    t.scale = j.at("scale").get<double>();
    const auto r = j.at("R").get<std::vector<double>>();
    const auto tr = j.at("t").get<std::vector<double>>();
    if (r.size() != 9 || tr.size() != 3) throw InputError("transform JSON: R needs 9 values and t needs 3");
    t.rotation = Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(r.data());
    t.translation = Vec3(tr[0], tr[1], tr[2]);
    if (!(t.scale > 0.0)) throw InputError("transform JSON: scale must be positive");
    return t;
  } catch (const json::exception& e) {
    throw InputError(std::string("transform JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------- PLY

namespace {

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

PlyType parse_ply_type(const std::string& s) {
  if (s == "char" || s == "int8") return PlyType::Int8;
  if (s == "uchar" || s == "uint8") return PlyType::UInt8;
  if (s == "short" || s == "int16") return PlyType::Int16;
  if (s == "ushort" || s == "uint16") return PlyType::UInt16;
  if (s == "int" || s == "int32") return PlyType::Int32;
  if (s == "uint" || s == "uint32") return PlyType::UInt32;
  if (s == "float" || s == "float32") return PlyType::Float32;
  if (s == "double" || s == "float64") return PlyType::Float64;
  throw InputError("PLY: unsupported property type '" + s + "'");
}

std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::Int8:
    case PlyType::UInt8: return 1;
    case PlyType::Int16:
    case PlyType::UInt16: return 2;
    case PlyType::Int32:
    case PlyType::UInt32:
    case PlyType::Float32: return 4;
    case PlyType::Float64: return 8;
  }
  return 0;
}

double ply_decode(PlyType t, const char* p) {
  // binary_little_endian only, read on a little-endian host
  switch (t) {
    case PlyType::Int8: { std::int8_t v; std::memcpy(&v, p, 1); return v; }
    case PlyType::UInt8: { std::uint8_t v; std::memcpy(&v, p, 1); return v; }
    case PlyType::Int16: { std::int16_t v; std::memcpy(&v, p, 2); return v; }
    case PlyType::UInt16: { std::uint16_t v; std::memcpy(&v, p, 2); return v; }
    case PlyType::Int32: { std::int32_t v; std::memcpy(&v, p, 4); return v; }
    case PlyType::UInt32: { std::uint32_t v; std::memcpy(&v, p, 4); return v; }
    case PlyType::Float32: { float v; std::memcpy(&v, p, 4); return v; }
    case PlyType::Float64: { double v; std::memcpy(&v, p, 8); return v; }
  }
  return 0.0;
}

bool is_integer_type(PlyType t) { return t != PlyType::Float32 && t != PlyType::Float64; }

double color_scale(PlyType t) {
  if (t == PlyType::UInt16) return 65535.0;
  return is_integer_type(t) ? 255.0 : 1.0;
}

struct PlyProperty {
  std::string name;
  PlyType type;
};

}  // namespace

PointCloud read_ply(const fs::path& path) {
  auto in = open_in(path, std::ios::binary);
  std::string line;
  std::getline(in, line);
  if (line.rfind("ply", 0) != 0) throw InputError(path.string() + ": not a PLY file");

  std::string format;
  Eigen::Index vertex_count = -1;
  std::vector<PlyProperty> props;
  bool in_vertex = false;
  bool vertex_seen = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format") {
      ls >> format;
    } else if (key == "element") {
      std::string name;
      Eigen::Index count = 0;
      ls >> name >> count;
      if (vertex_seen && !in_vertex) continue;
      in_vertex = name == "vertex";
      if (in_vertex) {
        vertex_count = count;
        vertex_seen = true;
      } else if (!vertex_seen) {
        throw InputError(path.string() + ": vertex element must come first");
      }
    } else if (key == "property" && in_vertex) {
      std::string type, name;
      ls >> type;
      if (type == "list") throw InputError(path.string() + ": list properties are not supported in the vertex element");
      ls >> name;
      props.push_back({name, parse_ply_type(type)});
    } else if (key == "end_header") {
      break;
    }
  }
  if (vertex_count < 0) throw InputError(path.string() + ": no vertex element");
  if (format != "ascii" && format != "binary_little_endian") {
    throw InputError(path.string() + ": unsupported PLY format '" + format + "'");
  }

  auto find = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < props.size(); ++i) {
      if (props[i].name == name) return static_cast<int>(i);
    }
    return -1;
  };
  const int ix = find("x"), iy = find("y"), iz = find("z");
  if (ix < 0 || iy < 0 || iz < 0) throw InputError(path.string() + ": missing x/y/z properties");
  const int ir = find("red"), ig = find("green"), ib = find("blue");
  const bool has_color = ir >= 0 && ig >= 0 && ib >= 0;

  PointCloud cloud;
  cloud.positions.resize(3, vertex_count);
  if (has_color) cloud.colors = Points3(3, vertex_count);

  std::vector<double> values(props.size());
  std::vector<std::size_t> offsets(props.size());
  std::size_t stride = 0;
  for (std::size_t i = 0; i < props.size(); ++i) {
    offsets[i] = stride;
    stride += ply_size(props[i].type);
  }
  std::vector<char> record(stride);

  for (Eigen::Index n = 0; n < vertex_count; ++n) {
    if (format == "ascii") {
      for (double& v : values) {
        if (!(in >> v)) throw InputError(path.string() + ": truncated ASCII vertex data");
      }
    } else {
      in.read(record.data(), std::streamsize(stride));
      if (!in) throw InputError(path.string() + ": truncated binary vertex data");
      for (std::size_t i = 0; i < props.size(); ++i) values[i] = ply_decode(props[i].type, record.data() + offsets[i]);
    }
    cloud.positions.col(n) = Vec3(values[std::size_t(ix)], values[std::size_t(iy)], values[std::size_t(iz)]);
    if (has_color) {
      cloud.colors->col(n) = Vec3(values[std::size_t(ir)] / color_scale(props[std::size_t(ir)].type),
                                  values[std::size_t(ig)] / color_scale(props[std::size_t(ig)].type),
                                  values[std::size_t(ib)] / color_scale(props[std::size_t(ib)].type));
    }
  }
  cloud.validate();
  return cloud;
}

void write_ply(const fs::path& path, const PointCloud& cloud, bool binary) {
  auto out = open_out(path, std::ios::binary);
  out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n";
  out << "comment frame " << cloud.frame_label << "\n";
  out << "element vertex " << cloud.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  if (cloud.has_colors()) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";

  auto to_byte = [](double c) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0));
  };
  if (binary) {
    for (Eigen::Index i = 0; i < cloud.size(); ++i) {
      for (int a = 0; a < 3; ++a) {
        const double v = cloud.positions(a, i);
        out.write(reinterpret_cast<const char*>(&v), sizeof(double));
      }
      if (cloud.has_colors()) {
        for (int a = 0; a < 3; ++a) {
          const std::uint8_t c = to_byte((*cloud.colors)(a, i));
          out.write(reinterpret_cast<const char*>(&c), 1);
        }
      }
    }
  } else {
    out.precision(17);
    for (Eigen::Index i = 0; i < cloud.size(); ++i) {
      out << cloud.positions(0, i) << " " << cloud.positions(1, i) << " " << cloud.positions(2, i);
      if (cloud.has_colors()) {
        for (int a = 0; a < 3; ++a) out << " " << int(to_byte((*cloud.colors)(a, i)));
      }
      out << "\n";
    }
  }
}

// ---------------------------------------------------------------- PNG

RgbImage read_png(const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw InputError(path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw InputError(path.string() + ": " + image.message);
  }
  RgbImage out(static_cast<int>(image.width), static_cast<int>(image.height));
  for (Eigen::Index i = 0; i < out.pixels.rows(); ++i) {
    for (int c = 0; c < 3; ++c) out.pixels(i, c) = buffer[std::size_t(i) * 3 + std::size_t(c)] / 255.0f;
  }
  return out;
}

void write_png(const fs::path& path, const RgbImage& img) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::vector<png_byte> buffer(std::size_t(img.width) * std::size_t(img.height) * 3);
  for (Eigen::Index i = 0; i < img.pixels.rows(); ++i) {
    for (int c = 0; c < 3; ++c) {
      buffer[std::size_t(i) * 3 + std::size_t(c)] =
          static_cast<png_byte>(std::lround(std::clamp(img.pixels(i, c), 0.0f, 1.0f) * 255.0f));
    }
  }
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw InputError(path.string() + ": " + image.message);
  }
}

json read_json(const fs::path& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << "\n";
}

}  // namespace geomem::io
