#pragma once

#include <string>
#include <vector>

#include "paramisp/canonet.hpp"
#include "paramisp/io.hpp"
#include "paramisp/paramnet.hpp"
#include "paramisp/tensor.hpp"

namespace paramisp {

/// One aligned RAW/sRGB pair with its metadata.
struct Sample {
  std::string id;
  std::string camera;
  Tensor<float> raw;   // 1 x H x W
  Tensor<float> srgb;  // 3 x H x W
  SidecarMetadata meta;
};

struct Dataset {
  std::vector<Sample> train;
  std::vector<Sample> val;
};

/// Directory layout: index.json plus <id>.pgm, <id>.json, <id>.ppm per pair.
void save_dataset(const Dataset& data, const std::string& dir);
Dataset load_dataset(const std::string& dir);
/// Train splits of several directories concatenated (val likewise).
Dataset load_datasets(const std::vector<std::string>& dirs);

}  // namespace paramisp
