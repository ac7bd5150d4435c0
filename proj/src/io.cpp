#include "paramisp/io.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "paramisp/error.hpp"

namespace paramisp {

using nlohmann::json;

namespace {

std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::Io, "cannot open ", path);
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorCode::Io, "cannot write ", path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) raise(ErrorCode::Io, "write failed for ", path);
}

// Netpbm header: magic, then whitespace-separated integers with # comments,
// then exactly one whitespace byte before the raster.
struct PnmHeader {
  std::string magic;
  int64_t width = 0, height = 0;
  int maxval = 0;
  size_t data_offset = 0;
};

PnmHeader parse_pnm_header(const std::vector<char>& buf, const std::string& path, const char* expected) {
  PnmHeader h;
  size_t pos = 0;
  auto fail = [&](const std::string& what) { raise(ErrorCode::Format, path, ": malformed header (", what, ")"); };
  if (buf.size() < 2) fail("file too short");
  h.magic.assign(buf.begin(), buf.begin() + 2);
  if (h.magic != expected) fail(std::string("expected magic ") + expected + ", found '" + h.magic + "'");
  pos = 2;
  auto next_int = [&](const char* field) -> int64_t {
    while (pos < buf.size()) {
      const char c = buf[pos];
      if (c == '#') {
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else {
        break;
      }
    }
    if (pos >= buf.size() || !std::isdigit(static_cast<unsigned char>(buf[pos]))) fail(std::string("missing ") + field);
    int64_t v = 0;
    while (pos < buf.size() && std::isdigit(static_cast<unsigned char>(buf[pos]))) {
      v = v * 10 + (buf[pos] - '0');
      if (v > (int64_t{1} << 31)) fail(std::string(field) + " too large");
      ++pos;
    }
    return v;
  };
  h.width = next_int("width");
  h.height = next_int("height");
  h.maxval = static_cast<int>(next_int("maxval"));
  if (h.width < 1 || h.height < 1) fail("non-positive dimensions");
  if (h.maxval < 1 || h.maxval > 65535) fail("maxval outside [1, 65535]");
  if (pos >= buf.size() || !std::isspace(static_cast<unsigned char>(buf[pos]))) fail("no separator before raster");
  h.data_offset = pos + 1;
  return h;
}

std::vector<uint16_t> read_samples(const std::vector<char>& buf, const PnmHeader& h, int64_t count,
                                   const std::string& path) {
  const int bytes = h.maxval > 255 ? 2 : 1;
  if (buf.size() - h.data_offset < static_cast<size_t>(count * bytes))
    raise(ErrorCode::Format, path, ": truncated raster (expected ", count * bytes, " bytes)");
  std::vector<uint16_t> out(static_cast<size_t>(count));
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + h.data_offset);
  for (int64_t i = 0; i < count; ++i) {
    const uint16_t v = bytes == 2 ? static_cast<uint16_t>((p[2 * i] << 8) | p[2 * i + 1]) : p[i];
    if (v > h.maxval) raise(ErrorCode::Format, path, ": sample ", i, " exceeds maxval");
    out[i] = v;
  }
  return out;
}

std::string encode_samples(const char* magic, int64_t w, int64_t h, int maxval, const std::vector<uint16_t>& s) {
  std::ostringstream os;
  os << magic << "\n" << w << " " << h << "\n" << maxval << "\n";
  std::string bytes = os.str();
  const bool wide = maxval > 255;
  bytes.reserve(bytes.size() + s.size() * (wide ? 2 : 1));
  for (uint16_t v : s) {
    if (wide) bytes.push_back(static_cast<char>(v >> 8));
    bytes.push_back(static_cast<char>(v & 0xff));
  }
  return bytes;
}

template <class T>
T required(const json& j, const char* key, const std::string& path) {
  if (!j.contains(key)) raise(ErrorCode::Format, path, ": sidecar is missing key \"", key, "\"");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    raise(ErrorCode::Format, path, ": sidecar key \"", key, "\" has the wrong type");
  }
}

}  // namespace

void SidecarMetadata::validate() const {
  cano.validate();
  opt.validate();
  if (black_level < 0 || white_level <= black_level)
    raise(ErrorCode::Format, "sidecar levels invalid: black ", black_level, ", white ", white_level);
}

GrayImage16 read_pgm(const std::string& path) {
  const auto buf = read_file(path);
  const PnmHeader h = parse_pnm_header(buf, path, "P5");
  GrayImage16 img;
  img.width = h.width;
  img.height = h.height;
  img.pixels = read_samples(buf, h, h.width * h.height, path);
  return img;
}

void write_pgm(const std::string& path, const GrayImage16& img) {
  if (static_cast<int64_t>(img.pixels.size()) != img.width * img.height)
    raise(ErrorCode::InvalidArgument, "write_pgm: pixel count does not match dimensions");
  write_file(path, encode_samples("P5", img.width, img.height, 65535, img.pixels));
}

ColorImage read_ppm(const std::string& path) {
  const auto buf = read_file(path);
  const PnmHeader h = parse_pnm_header(buf, path, "P6");
  ColorImage img;
  img.width = h.width;
  img.height = h.height;
  img.maxval = h.maxval;
  img.samples = read_samples(buf, h, 3 * h.width * h.height, path);
  return img;
}

void write_ppm(const std::string& path, const ColorImage& img) {
  if (static_cast<int64_t>(img.samples.size()) != 3 * img.width * img.height)
    raise(ErrorCode::InvalidArgument, "write_ppm: sample count does not match dimensions");
  if (img.maxval < 1 || img.maxval > 65535) raise(ErrorCode::InvalidArgument, "write_ppm: bad maxval");
  write_file(path, encode_samples("P6", img.width, img.height, img.maxval, img.samples));
}

SidecarMetadata read_sidecar(const std::string& path) {
  const auto buf = read_file(path);
  json j;
  try {
    j = json::parse(buf.begin(), buf.end());
  } catch (const json::exception& e) {
    raise(ErrorCode::Format, path, ": invalid JSON (", e.what(), ")");
  }
  if (!j.is_object()) raise(ErrorCode::Format, path, ": sidecar must be a JSON object");
  SidecarMetadata m;
  m.cano.pattern = parse_bayer_pattern(required<std::string>(j, "bayer_pattern", path));
  const auto gains = required<std::vector<double>>(j, "wb_gains", path);
  if (gains.size() != 3) raise(ErrorCode::Format, path, ": \"wb_gains\" must have 3 entries");
  std::copy(gains.begin(), gains.end(), m.cano.wb_gains.begin());
  const auto ccm = required<std::vector<double>>(j, "ccm", path);
  if (ccm.size() != 9) raise(ErrorCode::Format, path, ": \"ccm\" must have 9 entries");
  std::copy(ccm.begin(), ccm.end(), m.cano.ccm.begin());
  m.black_level = required<int>(j, "black_level", path);
  m.white_level = required<int>(j, "white_level", path);
  m.opt.exposure_time_s = required<double>(j, "exposure_time_s", path);
  m.opt.iso = required<double>(j, "iso", path);
  m.opt.f_number = required<double>(j, "f_number", path);
  m.opt.focal_length_mm = required<double>(j, "focal_length_mm", path);
  try {
    m.validate();
  } catch (const Error& e) {
    raise(ErrorCode::Format, path, ": ", e.what());
  }
  return m;
}

void write_sidecar(const std::string& path, const SidecarMetadata& meta) {
  meta.validate();
  json j;
  j["bayer_pattern"] = bayer_pattern_name(meta.cano.pattern);
  j["wb_gains"] = meta.cano.wb_gains;
  j["ccm"] = meta.cano.ccm;
  j["black_level"] = meta.black_level;
  j["white_level"] = meta.white_level;
  j["exposure_time_s"] = meta.opt.exposure_time_s;
  j["iso"] = meta.opt.iso;
  j["f_number"] = meta.opt.f_number;
  j["focal_length_mm"] = meta.opt.focal_length_mm;
  write_file(path, j.dump(2) + "\n");
}

float normalize_raw_value(uint16_t v, int black_level, int white_level) noexcept {
  const double x = (static_cast<double>(v) - black_level) / static_cast<double>(white_level - black_level);
  return static_cast<float>(std::clamp(x, 0.0, 1.0));
}

uint16_t quantize_raw_value(double x, int black_level, int white_level) noexcept {
  const double v = std::round(std::clamp(x, 0.0, 1.0) * (white_level - black_level) + black_level);
  return static_cast<uint16_t>(v);
}

RawFile load_raw(const std::string& pgm_path, const std::string& meta_path) {
  RawFile f;
  f.meta = read_sidecar(meta_path);
  const GrayImage16 img = read_pgm(pgm_path);
  if (img.width % 2 || img.height % 2)
    raise(ErrorCode::Format, pgm_path, ": RAW dimensions must be even, got ", img.width, "x", img.height);
  std::vector<float> v(img.pixels.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = normalize_raw_value(img.pixels[i], f.meta.black_level, f.meta.white_level);
  f.raw = Tensor<float>({1, img.height, img.width}, std::move(v));
  return f;
}

void save_raw(const Tensor<float>& raw, const SidecarMetadata& meta, const std::string& pgm_path,
              const std::string& meta_path) {
  if (raw.ndim() != 3 || raw.dim(0) != 1)
    raise(ErrorCode::ShapeMismatch, "save_raw: expected 1 x H x W, got ", shape_str(raw.shape()));
  meta.validate();
  GrayImage16 img;
  img.height = raw.dim(1);
  img.width = raw.dim(2);
  img.pixels.resize(static_cast<size_t>(raw.numel()));
  const auto d = raw.data();
  for (size_t i = 0; i < img.pixels.size(); ++i)
    img.pixels[i] = quantize_raw_value(d[i], meta.black_level, meta.white_level);
  write_pgm(pgm_path, img);
  write_sidecar(meta_path, meta);
}

Tensor<float> color_to_tensor(const ColorImage& img) {
  const int64_t plane = img.width * img.height;
  std::vector<float> v(static_cast<size_t>(3 * plane));
  const double maxval = img.maxval;
  for (int64_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c) v[c * plane + i] = static_cast<float>(img.samples[3 * i + c] / maxval);
  return Tensor<float>({3, img.height, img.width}, std::move(v));
}

ColorImage tensor_to_color(const Tensor<float>& t, int bits) {
  if (t.ndim() != 3 || t.dim(0) != 3)
    raise(ErrorCode::ShapeMismatch, "expected a 3 x H x W image, got ", shape_str(t.shape()));
  if (bits != 8 && bits != 16) raise(ErrorCode::InvalidArgument, "bit depth must be 8 or 16, got ", bits);
  ColorImage img;
  img.height = t.dim(1);
  img.width = t.dim(2);
  img.maxval = bits == 8 ? 255 : 65535;
  const int64_t plane = img.width * img.height;
  img.samples.resize(static_cast<size_t>(3 * plane));
  const auto d = t.data();
  for (int64_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c) {
      const double x = std::clamp(static_cast<double>(d[c * plane + i]), 0.0, 1.0);
      img.samples[3 * i + c] = static_cast<uint16_t>(std::lround(x * img.maxval));
    }
  return img;
}

Tensor<float> load_srgb(const std::string& ppm_path) { return color_to_tensor(read_ppm(ppm_path)); }

void save_srgb(const Tensor<float>& img, const std::string& ppm_path, int bits) {
  write_ppm(ppm_path, tensor_to_color(img, bits));
}

std::string sidecar_path_for(const std::string& image_path) {
  return std::filesystem::path(image_path).replace_extension(".json").string();
}

}  // namespace paramisp
