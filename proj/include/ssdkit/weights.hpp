#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace ssdkit {

struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  std::size_t numel() const;
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Named tensors. Conv-like layers store "<layer>" with shape
/// (C_out, C_in, k_h, k_w) (C_in = 1 for dwconv) and "<layer>/bias" with
/// shape (C_out).
using WeightStore = std::map<std::string, Tensor>;

std::string bias_key(const std::string& layer);

/// Binary layout, little-endian throughout:
///   "SSDW" | u32 version=1 | u32 count |
///   count x { u32 name_len | name | u32 ndim | u32 dims[ndim] | f32 data[] }
/// Tensors are written in key order.
std::string serialize_weights(const WeightStore& w);
WeightStore deserialize_weights(const std::string& bytes);

void save_weights(const WeightStore& w, const std::filesystem::path& path);
WeightStore load_weights(const std::filesystem::path& path);

}  // namespace ssdkit
