#include "paramisp/dataset.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>

#include "paramisp/error.hpp"

namespace paramisp {

namespace fs = std::filesystem;
using nlohmann::json;

void save_dataset(const Dataset& data, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) raise(ErrorCode::Io, "cannot create ", dir, ": ", ec.message());
  json items = json::array();
  auto emit = [&](const std::vector<Sample>& split, const char* name) {
    for (const auto& s : split) {
      const std::string base = (fs::path(dir) / s.id).string();
      save_raw(s.raw, s.meta, base + ".pgm", base + ".json");
      save_srgb(s.srgb, base + ".ppm", 16);
      items.push_back({{"id", s.id}, {"split", name}, {"camera", s.camera}});
    }
  };
  emit(data.train, "train");
  emit(data.val, "val");
  std::ofstream out(fs::path(dir) / "index.json");
  if (!out) raise(ErrorCode::Io, "cannot write index in ", dir);
  out << json{{"items", items}}.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  const fs::path index = fs::path(dir) / "index.json";
  std::ifstream in(index);
  if (!in) raise(ErrorCode::Io, "cannot open ", index.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    raise(ErrorCode::Format, index.string(), ": invalid JSON (", e.what(), ")");
  }
  if (!j.contains("items") || !j["items"].is_array()) raise(ErrorCode::Format, index.string(), ": missing \"items\"");
  Dataset d;
  for (const auto& item : j["items"]) {
    if (!item.contains("id") || !item.contains("split"))
      raise(ErrorCode::Format, index.string(), ": item without \"id\" or \"split\"");
    Sample s;
    s.id = item["id"].get<std::string>();
    s.camera = item.value("camera", std::string("camera"));
    const std::string base = (fs::path(dir) / s.id).string();
    RawFile rf = load_raw(base + ".pgm", base + ".json");
    s.raw = rf.raw;
    s.meta = rf.meta;
    s.srgb = load_srgb(base + ".ppm");
    if (s.srgb.dim(1) != s.raw.dim(1) || s.srgb.dim(2) != s.raw.dim(2))
      raise(ErrorCode::Format, base, ": RAW and sRGB sizes differ");
    const std::string split = item["split"].get<std::string>();
    if (split == "train") d.train.push_back(std::move(s));
    else if (split == "val") d.val.push_back(std::move(s));
    else raise(ErrorCode::Format, index.string(), ": unknown split '", split, "'");
  }
  return d;
}

Dataset load_datasets(const std::vector<std::string>& dirs) {
  Dataset all;
  for (const auto& dir : dirs) {
    Dataset d = load_dataset(dir);
    for (auto& s : d.train) all.train.push_back(std::move(s));
    for (auto& s : d.val) all.val.push_back(std::move(s));
  }
  return all;
}

}  // namespace paramisp
