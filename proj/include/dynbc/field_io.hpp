#pragma once

// Serialization of meshes and fields.
//
//   mesh   -> JSON {"R": ..., "Nr": ..., "Nth": ...}
//   field  -> CSV with header "index,value", numbers at 17 significant digits
//   field  -> binary: raw little-endian IEEE-754 float64, row-major (ring-major
//             for bulk fields), no header

#include <Eigen/Core>
#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dynbc/error.hpp"
#include "dynbc/mesh.hpp"

namespace dynbc {

/// Fixed 17-significant-digit formatting; round-trips any double exactly.
inline std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline nlohmann::json mesh_to_json(const DiskMesh& mesh) {
  return {{"R", mesh.radius()}, {"Nr", mesh.nr()}, {"Nth", mesh.nth()}};
}

inline DiskMesh mesh_from_json(const nlohmann::json& j) {
  try {
    return DiskMesh(j.at("R").get<double>(), j.at("Nr").get<int>(), j.at("Nth").get<int>());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("mesh json: ") + e.what());
  }
}

inline void write_values_csv(std::ostream& os, const Eigen::VectorXd& v) {
  os << "index,value\n";
  for (Eigen::Index k = 0; k < v.size(); ++k) os << k << ',' << format_number(v[k]) << '\n';
}

inline Eigen::VectorXd read_values_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("index,value", 0) != 0)
    throw InvalidArgument("field csv: missing 'index,value' header");
  std::vector<double> vals;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw InvalidArgument("field csv: malformed row '" + line + "'");
    const long idx = std::stol(line.substr(0, comma));
    if (idx != static_cast<long>(vals.size())) throw InvalidArgument("field csv: indices must be 0..n-1 in order");
    vals.push_back(std::stod(line.substr(comma + 1)));
  }
  return Eigen::Map<Eigen::VectorXd>(vals.data(), Eigen::Index(vals.size()));
}

inline void write_values_binary(std::ostream& os, const Eigen::VectorXd& v) {
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v[k]);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    unsigned char bytes[8];
    std::memcpy(bytes, &bits, 8);
    os.write(reinterpret_cast<const char*>(bytes), 8);
  }
}

inline Eigen::VectorXd read_values_binary(std::istream& is) {
  std::vector<double> vals;
  unsigned char bytes[8];
  while (is.read(reinterpret_cast<char*>(bytes), 8)) {
    std::uint64_t bits;
    std::memcpy(&bits, bytes, 8);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    vals.push_back(std::bit_cast<double>(bits));
  }
  if (is.gcount() != 0) throw InvalidArgument("field binary: trailing partial record");
  return Eigen::Map<Eigen::VectorXd>(vals.data(), Eigen::Index(vals.size()));
}

inline std::string to_csv(const Eigen::VectorXd& v) {
  std::ostringstream os;
  write_values_csv(os, v);
  return os.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FilesystemError("cannot open '" + path + "' for writing");
  os << text;
  if (!os) throw FilesystemError("write to '" + path + "' failed");
}

inline void save_field_csv(const std::string& path, const Eigen::VectorXd& v) { write_text_file(path, to_csv(v)); }

inline void save_field_binary(const std::string& path, const Eigen::VectorXd& v) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FilesystemError("cannot open '" + path + "' for writing");
  write_values_binary(os, v);
}

inline Eigen::VectorXd load_field_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FilesystemError("cannot open '" + path + "'");
  return read_values_csv(is);
}

inline Eigen::VectorXd load_field_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FilesystemError("cannot open '" + path + "'");
  return read_values_binary(is);
}

}  // namespace dynbc
