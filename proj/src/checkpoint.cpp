// SPDX-License-Identifier: Apache-2.0
#include "sammese/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

namespace sammese {

namespace {

constexpr char kMagic[8] = {'S', 'A', 'M', 'M', 'E', 'S', 'E', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

}  // namespace

void write_archive(const std::string& path, const Archive& archive) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp);
    const std::string manifest = archive.manifest.dump();
    const uint64_t len = manifest.size();
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
    for (const auto& [name, t] : archive.arrays) {
      out.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
    }
    if (!out) throw CheckpointError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Archive read_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  char magic[8];
  uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw CheckpointError(path + " is not a checkpoint archive");
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw CheckpointError(path + ": truncated manifest");

  Archive a;
  try {
    a.manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path + ": bad manifest: " + e.what());
  }
  for (const auto& p : a.manifest.at("parameters")) {
    Shape shape = p.at("shape").get<Shape>();
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!in) throw CheckpointError(path + ": truncated payload at " + p.at("name").get<std::string>());
    a.arrays.emplace_back(p.at("name").get<std::string>(), std::move(t));
  }
  return a;
}

void save_checkpoint(const std::string& path, const ParameterRegistry& reg, const RunConfig& cfg) {
  Archive a;
  a.manifest["format"] = "sammese-checkpoint";
  a.manifest["version"] = 1;
  a.manifest["config_hash"] = cfg.architecture_hash();
  a.manifest["architecture"] = cfg.architecture_text();
  nlohmann::json params = nlohmann::json::array();
  for (const auto& e : reg.entries()) {
    params.push_back({{"name", e.name},
                      {"module", e.module},
                      {"shape", e.var.shape()},
                      {"trainable", e.trainable}});
    a.arrays.emplace_back(e.name, e.var.value());
  }
  a.manifest["parameters"] = std::move(params);
  write_archive(path, a);
}

void load_checkpoint(const std::string& path, ParameterRegistry& reg, const RunConfig& cfg) {
  const Archive a = read_archive(path);
  const uint64_t hash = a.manifest.at("config_hash").get<uint64_t>();
  if (hash != cfg.architecture_hash()) {
    throw CheckpointError(path + ": architecture hash mismatch (checkpoint built with\n" +
                          a.manifest.value("architecture", std::string("?")) + ")");
  }
  const auto& params = a.manifest.at("parameters");
  if (params.size() != reg.entries().size()) {
    throw CheckpointError(path + ": parameter count " + std::to_string(params.size()) +
                          " differs from model's " + std::to_string(reg.entries().size()));
  }
  for (size_t i = 0; i < params.size(); ++i) {
    const std::string name = params[i].at("name").get<std::string>();
    if (!reg.contains(name)) throw CheckpointError(path + ": unknown parameter " + name);
    const auto& e = reg.entry(name);
    if (params[i].at("trainable").get<bool>() != e.trainable) {
      throw CheckpointError(path + ": membership mismatch for " + name);
    }
    if (a.arrays[i].second.shape() != e.var.shape()) {
      throw CheckpointError(path + ": shape mismatch for " + name);
    }
  }
  for (size_t i = 0; i < params.size(); ++i) {
    ag::Var v = reg.get(a.arrays[i].first);
    v.mutable_value() = a.arrays[i].second;
  }
}

}  // namespace sammese
