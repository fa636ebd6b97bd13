#pragma once

// Flat binary archive of named arrays:
//   "CSRARCH1" | u64 count | { u32 name_len | name | u32 rank | u64 dims[rank] | f64 data[] }*
// All integers and floats little-endian.

#include <string>
#include <string_view>
#include <vector>

#include "consor/autodiff.hpp"

namespace consor::ad {

struct NamedArray {
  std::string name;
  Tensor value;

  bool operator==(const NamedArray&) const = default;
};

std::string write_archive(const std::vector<NamedArray>& arrays);
/// Throws Error(ParseError) on truncated or malformed input.
std::vector<NamedArray> read_archive(std::string_view bytes);

}  // namespace consor::ad
