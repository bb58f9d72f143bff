// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "dereverb/error.hpp"
#include "dereverb/nn/params.hpp"
#include "dereverb/random.hpp"

namespace dereverb {

/// Binary archive: "DRVB", u32 version, u64 header size, JSON header, payload.
/// The header lists every tensor (name, shape, dtype, byte offset, byte count),
/// a payload checksum and a free-form "state" record.
inline constexpr char kCheckpointMagic[4] = {'D', 'R', 'V', 'B'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class ArchiveWriter {
 public:
  template <class T>
  void add(const std::string& name, const std::vector<std::size_t>& shape, const std::vector<T>& values) {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    if (index_.count(name)) throw InvalidArgument("duplicate archive entry " + name);
    nlohmann::json e = {{"name", name},
                        {"shape", shape},
                        {"dtype", std::is_same_v<T, float> ? "f32" : "f64"},
                        {"offset", payload_.size()},
                        {"bytes", values.size() * sizeof(T)}};
    index_[name] = entries_.size();
    entries_.push_back(e);
    const auto* p = reinterpret_cast<const char*>(values.data());
    payload_.insert(payload_.end(), p, p + values.size() * sizeof(T));
  }
  template <class T>
  void add_params(const std::string& prefix, const nn::ParamList<T>& params) {
    for (const auto& p : params.items()) add(prefix + p.name, p.tensor.shape(), p.tensor.value());
  }

  nlohmann::json& state() { return state_; }

  /// Writes atomically (temporary file, then rename).
  void write(const std::filesystem::path& path) const {
    nlohmann::json header = {{"tensors", entries_},
                             {"payload_bytes", payload_.size()},
                             {"payload_fnv1a", stable_hash(std::string_view(payload_.data(), payload_.size()))},
                             {"state", state_}};
    const std::string h = header.dump();
    auto tmp = path;
    tmp += ".tmp";
    {
      std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
      if (!f) throw IoError("cannot write " + tmp.string());
      const std::uint64_t hs = h.size();
      f.write(kCheckpointMagic, 4);
      f.write(reinterpret_cast<const char*>(&kCheckpointVersion), sizeof kCheckpointVersion);
      f.write(reinterpret_cast<const char*>(&hs), sizeof hs);
      f.write(h.data(), static_cast<std::streamsize>(h.size()));
      f.write(payload_.data(), static_cast<std::streamsize>(payload_.size()));
      if (!f) throw IoError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
  }

 private:
  std::vector<nlohmann::json> entries_;
  std::map<std::string, std::size_t> index_;
  std::vector<char> payload_;
  nlohmann::json state_ = nlohmann::json::object();
};

class ArchiveReader {
 public:
  explicit ArchiveReader(const std::filesystem::path& path) : path_(path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint " + path.string());
    char magic[4];
    std::uint32_t version = 0;
    std::uint64_t hs = 0;
    f.read(magic, 4);
    f.read(reinterpret_cast<char*>(&version), sizeof version);
    f.read(reinterpret_cast<char*>(&hs), sizeof hs);
    if (!f || std::memcmp(magic, kCheckpointMagic, 4) != 0)
      throw IoError(path.string() + ": not a checkpoint archive");
    if (version != kCheckpointVersion)
      throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    if (hs > (1ull << 30)) throw IoError(path.string() + ": corrupt header");
    std::string h(hs, '\0');
    f.read(h.data(), static_cast<std::streamsize>(hs));
    if (!f) throw IoError(path.string() + ": truncated header");
    try {
      header_ = nlohmann::json::parse(h);
      const std::uint64_t bytes = header_.at("payload_bytes");
      payload_.resize(bytes);
      f.read(payload_.data(), static_cast<std::streamsize>(bytes));
      if (!f || f.gcount() != static_cast<std::streamsize>(bytes)) throw IoError(path.string() + ": truncated payload");
      if (header_.at("payload_fnv1a").get<std::uint64_t>() !=
          stable_hash(std::string_view(payload_.data(), payload_.size())))
        throw IoError(path.string() + ": payload checksum mismatch");
      for (std::size_t i = 0; i < header_.at("tensors").size(); ++i)
        index_[header_["tensors"][i].at("name").get<std::string>()] = i;
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ": corrupt header (" + e.what() + ")");
    }
  }

  const nlohmann::json& state() const { return header_.at("state"); }
  bool has(const std::string& name) const { return index_.count(name) > 0; }

  std::vector<std::size_t> shape(const std::string& name) const {
    return entry(name).at("shape").get<std::vector<std::size_t>>();
  }

  /// Reads an entry, converting from its stored precision.
  template <class T>
  std::vector<T> get(const std::string& name) const {
    const auto& e = entry(name);
    const std::size_t off = e.at("offset"), bytes = e.at("bytes");
    const std::string dtype = e.at("dtype");
    if (off + bytes > payload_.size()) throw IoError(path_.string() + ": entry " + name + " out of bounds");
    if (dtype == "f32") return convert<float, T>(off, bytes);
    if (dtype == "f64") return convert<double, T>(off, bytes);
    throw IoError(path_.string() + ": unknown dtype " + dtype);
  }

  template <class T>
  void load_params(const std::string& prefix, nn::ParamList<T>& params) const {
    for (auto& p : params.items()) {
      const std::string name = prefix + p.name;
      if (!has(name)) throw IoError(path_.string() + ": missing tensor " + name);
      if (shape(name) != p.tensor.shape())
        throw IoError(path_.string() + ": shape mismatch for " + name + " (" + nn::shape_str(shape(name)) +
                      " vs " + nn::shape_str(p.tensor.shape()) + ")");
      p.tensor.value() = get<T>(name);
    }
  }

 private:
  const nlohmann::json& entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw IoError(path_.string() + ": missing tensor " + name);
    return header_["tensors"][it->second];
  }
  template <class S, class T>
  std::vector<T> convert(std::size_t off, std::size_t bytes) const {
    std::vector<S> raw(bytes / sizeof(S));
    std::memcpy(raw.data(), payload_.data() + off, bytes);
    return std::vector<T>(raw.begin(), raw.end());
  }

  std::filesystem::path path_;
  nlohmann::json header_;
  std::vector<char> payload_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace dereverb
