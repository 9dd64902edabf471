#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hintnart/nn.hpp"

namespace hintnart {

// Checkpoint file layout, little-endian throughout:
//   magic "HNRT" | u32 version=1 | u32 metadata byte length | metadata
//   (UTF-8 "key = value" lines, sorted) | u32 entry count | entries of
//   (u32 name length, name, u32 rank, u64 extents..., u64 offset into the
//   data section) | raw float32 tensor data.
// Adam moments ride along as "m:<name>" / "v:<name>" entries so training can
// resume exactly.
struct Checkpoint {
  std::string kind;  // "teacher" or "student"
  ModelConfig model;
  ParamStore params;
  std::uint64_t step = 0;
  std::uint64_t rng_state = 0;
  std::vector<std::string> vocab;  // shared source/target table, reserved ids first
  std::map<std::string, std::string> extra;

  static constexpr std::uint32_t kVersion = 1;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace hintnart
