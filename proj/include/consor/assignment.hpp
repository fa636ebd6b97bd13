#pragma once

#include <vector>

namespace consor {

/// Maximum-weight perfect matching of rows to columns of a square matrix
/// (Hungarian method); result[row] = column.
std::vector<int> max_weight_assignment(const std::vector<std::vector<double>>& weight);

}  // namespace consor
