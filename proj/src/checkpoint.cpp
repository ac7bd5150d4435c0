#include "paramisp/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>

#include "paramisp/error.hpp"

namespace paramisp {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'P', 'I', 'S', 'P'};

template <class U>
void put(std::vector<uint8_t>& out, U v) {
  const auto* p = reinterpret_cast<const uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(U));
}

class Reader {
 public:
  explicit Reader(const std::vector<uint8_t>& b) : b_(b) {}
  template <class U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v;
    std::memcpy(&v, b_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string bytes(size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void floats(float* dst, size_t n, const char* what) {
    need(n * sizeof(float), what);
    std::memcpy(dst, b_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(size_t n, const char* what) const {
    if (b_.size() - pos_ < n) raise(ErrorCode::Format, "checkpoint truncated while reading ", what);
  }
  const std::vector<uint8_t>& b_;
  size_t pos_ = 0;
};

template <size_t N>
std::array<int, N> int_array(const json& j, const char* key) {
  std::array<int, N> a{};
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != N) raise(ErrorCode::Format, "checkpoint config: '", key, "' must have ", N, " entries");
  for (size_t i = 0; i < N; ++i) a[i] = v[i].get<int>();
  return a;
}

}  // namespace

std::string model_config_json(const ModelConfig& cfg) {
  const ArchConfig& a = cfg.arch;
  json arch = {{"z_dim", a.z_dim},
               {"param_proj_dim", a.param_proj_dim},
               {"local_widths", a.local_widths},
               {"local_resblocks", a.local_resblocks},
               {"cbam_reduction", a.cbam_reduction},
               {"global_widths", a.global_widths},
               {"global_hidden", a.global_hidden},
               {"global_stages", a.global_stages},
               {"use_paramnet", a.use_paramnet}};
  const EqualizationConfig& e = cfg.equalization;
  json eq = {{"c_values", e.c_values}, {"normalize", e.normalize}, {"log_range", e.log_range}, {"ranges", e.ranges}};
  json j = {{"direction", direction_name(cfg.direction)}, {"arch", arch}, {"equalization", eq}};
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  ModelConfig cfg;
  try {
    const json j = json::parse(text);
    cfg.direction = parse_direction(j.at("direction").get<std::string>());
    const json& a = j.at("arch");
    cfg.arch.z_dim = a.at("z_dim").get<int>();
    cfg.arch.param_proj_dim = a.at("param_proj_dim").get<int>();
    cfg.arch.local_widths = int_array<3>(a, "local_widths");
    cfg.arch.local_resblocks = a.at("local_resblocks").get<int>();
    cfg.arch.cbam_reduction = a.at("cbam_reduction").get<int>();
    cfg.arch.global_widths = int_array<4>(a, "global_widths");
    cfg.arch.global_hidden = a.at("global_hidden").get<int>();
    cfg.arch.global_stages = a.at("global_stages").get<int>();
    cfg.arch.use_paramnet = a.at("use_paramnet").get<bool>();
    const json& e = j.at("equalization");
    cfg.equalization.c_values = e.at("c_values").get<std::array<double, 3>>();
    cfg.equalization.normalize = e.at("normalize").get<bool>();
    cfg.equalization.log_range = e.at("log_range").get<std::array<Range, kOpticalCount>>();
    cfg.equalization.ranges = e.at("ranges").get<std::array<std::array<Range, kEqualizedDim>, kOpticalCount>>();
  } catch (const json::exception& ex) {
    raise(ErrorCode::Format, "checkpoint config: ", ex.what());
  }
  cfg.arch.validate();
  cfg.equalization.validate();
  return cfg;
}

std::vector<uint8_t> serialize_checkpoint(const IspModel& model) {
  std::vector<uint8_t> out(kMagic, kMagic + 4);
  put<uint32_t>(out, kCheckpointVersion);
  put<uint8_t>(out, static_cast<uint8_t>(model.direction()));
  const std::string cfg = model_config_json(model.config());
  put<uint32_t>(out, static_cast<uint32_t>(cfg.size()));
  out.insert(out.end(), cfg.begin(), cfg.end());
  const auto& store = model.params();
  put<uint32_t>(out, static_cast<uint32_t>(store.names().size()));
  for (size_t i = 0; i < store.names().size(); ++i) {
    const std::string& name = store.names()[i];
    const Tensor<float>& t = store.tensors()[i];
    if (name.size() > 0xffff) raise(ErrorCode::InvalidArgument, "parameter name too long");
    put<uint16_t>(out, static_cast<uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put<uint8_t>(out, static_cast<uint8_t>(t.ndim()));
    for (int64_t d : t.shape()) put<uint32_t>(out, static_cast<uint32_t>(d));
    const auto* p = reinterpret_cast<const uint8_t*>(t.data().data());
    out.insert(out.end(), p, p + t.numel() * sizeof(float));
  }
  return out;
}

IspModel deserialize_checkpoint(const std::vector<uint8_t>& bytes, std::optional<Direction> expected) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) raise(ErrorCode::Format, "bad magic");
  r.bytes(4, "magic");
  const uint32_t version = r.get<uint32_t>("version");
  if (version != kCheckpointVersion)
    raise(ErrorCode::Version, "unsupported checkpoint version ", version, " (expected ", kCheckpointVersion, ")");
  const uint8_t dir = r.get<uint8_t>("direction");
  if (dir > 1) raise(ErrorCode::Format, "bad direction tag ", int(dir));
  const Direction d = static_cast<Direction>(dir);
  if (expected && *expected != d)
    raise(ErrorCode::Direction, "checkpoint holds a ", direction_name(d), " model, ", direction_name(*expected),
          " required");
  const uint32_t cfg_len = r.get<uint32_t>("config length");
  ModelConfig cfg = model_config_from_json(r.bytes(cfg_len, "config"));
  if (cfg.direction != d) raise(ErrorCode::Format, "direction tag disagrees with config");

  IspModel model(cfg, 0);
  const auto& store = model.params();
  const uint32_t count = r.get<uint32_t>("array count");
  if (count != store.names().size())
    raise(ErrorCode::Format, "checkpoint has ", count, " arrays, architecture needs ", store.names().size());
  std::vector<float> buf;
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t len = r.get<uint16_t>("name length");
    const std::string name = r.bytes(len, "name");
    const Tensor<float>* t = store.find(name);
    if (!t) raise(ErrorCode::Format, "unexpected array '", name, "'");
    const uint8_t ndim = r.get<uint8_t>("ndim");
    Shape shape(ndim);
    for (auto& s : shape) s = r.get<uint32_t>("dims");
    if (shape != t->shape())
      raise(ErrorCode::Format, "array '", name, "' has shape ", shape_str(shape), ", expected ", shape_str(t->shape()));
    buf.resize(static_cast<size_t>(t->numel()));
    r.floats(buf.data(), buf.size(), "array data");
    if (!std::all_of(buf.begin(), buf.end(), [](float v) { return std::isfinite(v); }))
      raise(ErrorCode::NonFinite, "array '", name, "' holds a non-finite value");
    model.set_values(name, buf);
  }
  if (!r.done()) raise(ErrorCode::Format, "trailing bytes after checkpoint arrays");
  return model;
}

void save_checkpoint(const IspModel& model, const std::string& path) {
  const auto bytes = serialize_checkpoint(model);
  std::ofstream f(path, std::ios::binary);
  if (!f) raise(ErrorCode::Io, "cannot open '", path, "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) raise(ErrorCode::Io, "write to '", path, "' failed");
}

IspModel load_checkpoint(const std::string& path, std::optional<Direction> expected) {
  std::ifstream f(path, std::ios::binary);
  if (!f) raise(ErrorCode::Io, "cannot open checkpoint '", path, "'");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes, expected);
}

}  // namespace paramisp
