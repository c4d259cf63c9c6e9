#pragma once

#include <map>
#include <string>

#include "lo/autodiff.hpp"

namespace lo {

// Named-tensor container: magic + version header, a tensor table of
// (name, dtype, dims), then raw little-endian data. Write/read round
// trips are bit-exact. Both precisions can coexist in one file.
struct CheckpointData {
  std::map<std::string, Tensor<float>> f32;
  std::map<std::string, Tensor<double>> f64;
};

void write_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData read_checkpoint(const std::string& path);

}  // namespace lo
