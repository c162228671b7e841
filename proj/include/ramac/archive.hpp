#pragma once

#include <Eigen/Core>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

namespace ramac {

// Single-file tensor archive: "RMAR" magic, u32 little-endian header length,
// JSON header (version, user metadata, tensor directory), then raw
// little-endian float64 row-major blocks in directory order.
struct Archive {
  nlohmann::json meta;  // free-form header section
  std::map<std::string, Eigen::MatrixXd> tensors;

  void save(const std::string& path) const;
  static Archive load(const std::string& path);

  const Eigen::MatrixXd& get(const std::string& name) const;
};

}  // namespace ramac
