#pragma once

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "certimap/corridor.hpp"
#include "certimap/esdf.hpp"

namespace certimap {

inline nlohmann::ordered_json polytope_to_json(const Polytope& p) {
  nlohmann::ordered_json j;
  j["A"] = nlohmann::ordered_json::array();
  for (int i = 0; i < p.A.rows(); ++i) {
    j["A"].push_back({p.A(i, 0), p.A(i, 1), p.A(i, 2)});
  }
  j["b"] = std::vector<double>(p.b.data(), p.b.data() + p.b.size());
  j["birth_frame"] = p.birth_frame;
  return j;
}

inline Polytope polytope_from_json(const nlohmann::ordered_json& j) {
  std::vector<Halfspace> faces;
  const auto& a = j.at("A");
  const auto& b = j.at("b");
  if (a.size() != b.size()) throw std::runtime_error("polytope json: A/b size mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) {
    faces.push_back({Vec3(a[i][0].get<double>(), a[i][1].get<double>(), a[i][2].get<double>()),
                     b[i].get<double>()});
  }
  return make_polytope(faces, j.value("birth_frame", 0));
}

inline void write_corridor_snapshot(const std::string& path, const CorridorMap& map) {
  nlohmann::ordered_json j;
  j["frame"] = map.frame;
  j["policy"] = to_string(map.config.policy);
  j["polytopes"] = nlohmann::ordered_json::array();
  for (const Polytope& p : map.polytopes) j["polytopes"].push_back(polytope_to_json(p));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

// Binary grid snapshot, little-endian:
//   header : voxel_size f64, origin 3 x f64, count u64
//   records: count x { index i32 x3, distance f64 }, sorted by index
inline void write_esdf_snapshot(const std::string& path, const CertifiedEsdfMap& map) {
  std::vector<VoxelKey> keys;
  keys.reserve(map.cells.size());
  for (const auto& [key, d] : map.cells) keys.push_back(key);
  std::sort(keys.begin(), keys.end());

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  auto put = [&out](const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  };
  put(&map.config.voxel_size, 8);
  for (int a = 0; a < 3; ++a) put(&map.config.origin[a], 8);
  const std::uint64_t count = keys.size();
  put(&count, 8);
  for (const VoxelKey key : keys) {
    int idx[3];
    unpack_voxel(key, idx[0], idx[1], idx[2]);
    const std::int32_t i32[3] = {idx[0], idx[1], idx[2]};
    put(i32, 12);
    const double d = map.cells.at(key);
    put(&d, 8);
  }

  nlohmann::ordered_json side;
  side["frame"] = map.frame;
  side["policy"] = to_string(map.config.policy);
  side["voxel_size"] = map.config.voxel_size;
  side["truncation"] = map.config.truncation;
  side["count"] = count;
  std::ofstream meta(path + ".json", std::ios::binary);
  meta << side.dump(2) << "\n";
}

inline CertifiedEsdfMap read_esdf_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  auto get = [&in](void* p, std::size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in) throw std::runtime_error("truncated snapshot");
  };
  CertifiedEsdfMap map;
  get(&map.config.voxel_size, 8);
  for (int a = 0; a < 3; ++a) get(&map.config.origin[a], 8);
  std::uint64_t count = 0;
  get(&count, 8);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::int32_t idx[3];
    get(idx, 12);
    double d = 0.0;
    get(&d, 8);
    map.cells.emplace(pack_voxel(idx[0], idx[1], idx[2]), d);
  }
  return map;
}

inline void write_slice_csv(const std::string& path, const SliceRaster& slice) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (int iy = 0; iy < slice.ny; ++iy) {
    for (int ix = 0; ix < slice.nx; ++ix) {
      if (ix) out << ",";
      out << static_cast<int>(slice.cells[static_cast<std::size_t>(iy) * slice.nx + ix]);
    }
    out << "\n";
  }
}

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

}  // namespace certimap
