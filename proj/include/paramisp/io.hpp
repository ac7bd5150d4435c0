#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "paramisp/canonet.hpp"
#include "paramisp/paramnet.hpp"
#include "paramisp/tensor.hpp"

namespace paramisp {

struct SidecarMetadata {
  CanonicalParams cano;
  OpticalParams opt;
  int black_level = 0;
  int white_level = 65535;

  void validate() const;
};

struct GrayImage16 {
  int64_t width = 0;
  int64_t height = 0;
  std::vector<uint16_t> pixels;  // row-major
};

struct ColorImage {
  int64_t width = 0;
  int64_t height = 0;
  int maxval = 65535;
  std::vector<uint16_t> samples;  // interleaved RGB, row-major
};

GrayImage16 read_pgm(const std::string& path);
void write_pgm(const std::string& path, const GrayImage16& img);
ColorImage read_ppm(const std::string& path);
void write_ppm(const std::string& path, const ColorImage& img);

SidecarMetadata read_sidecar(const std::string& path);
void write_sidecar(const std::string& path, const SidecarMetadata& meta);

/// (v - black) / (white - black), clamped to [0,1].
float normalize_raw_value(uint16_t v, int black_level, int white_level) noexcept;
uint16_t quantize_raw_value(double x, int black_level, int white_level) noexcept;

struct RawFile {
  Tensor<float> raw;  // 1 x H x W in [0,1]
  SidecarMetadata meta;
};

RawFile load_raw(const std::string& pgm_path, const std::string& meta_path);
void save_raw(const Tensor<float>& raw, const SidecarMetadata& meta, const std::string& pgm_path,
              const std::string& meta_path);

/// 3 x H x W in [0,1].
Tensor<float> load_srgb(const std::string& ppm_path);
/// bits is 8 or 16; values are clamped and rounded to nearest.
void save_srgb(const Tensor<float>& img, const std::string& ppm_path, int bits = 16);

Tensor<float> color_to_tensor(const ColorImage& img);
ColorImage tensor_to_color(const Tensor<float>& img, int bits);

/// Same path with the extension replaced by .json.
std::string sidecar_path_for(const std::string& image_path);

}  // namespace paramisp
