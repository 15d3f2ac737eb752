// SPDX-License-Identifier: Apache-2.0

#include "urwkv/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace urwkv {

using nlohmann::json;

namespace {

constexpr char kMagic[] = "URWK1";
constexpr std::size_t kMagicLen = 5;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <class T> void put(std::string &buf, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  buf.append(bytes, sizeof(T));
}

template <class T> T get(const char *p) {
  T value;
  std::memcpy(&value, p, sizeof(T));
  return value;
}

} // namespace

const CheckpointEntry *Checkpoint::find(const std::string &name) const {
  for (const CheckpointEntry &e : tensors) {
    if (e.name == name) {
      return &e;
    }
  }
  return nullptr;
}

void save_checkpoint(const std::string &path, const Checkpoint &ckpt,
                     CheckpointDtype dtype) {
  const bool f32 = dtype == CheckpointDtype::kF32;
  const std::size_t width = f32 ? 4 : 8;
  std::string payload;
  json entries = json::array();
  for (const CheckpointEntry &e : ckpt.tensors) {
    if (shape_numel(e.shape) != e.values.size()) {
      throw CheckpointError("tensor " + e.name + " has " +
                            std::to_string(e.values.size()) +
                            " values for shape " + shape_str(e.shape));
    }
    entries.push_back({{"name", e.name},
                       {"shape", e.shape},
                       {"dtype", f32 ? "f32" : "f64"},
                       {"offset", payload.size()},
                       {"nbytes", e.values.size() * width}});
    for (double v : e.values) {
      if (f32) {
        put(payload, static_cast<float>(v));
      } else {
        put(payload, v);
      }
    }
  }
  const std::string header =
      json{{"meta", ckpt.meta}, {"tensors", entries}}.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw CheckpointError("cannot write checkpoint " + path);
    }
    std::string prefix(kMagic, kMagicLen);
    put(prefix, static_cast<std::uint64_t>(header.size()));
    out.write(prefix.data(), static_cast<std::streamsize>(prefix.size()));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) {
      throw CheckpointError("short write to checkpoint " + path);
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw CheckpointError("cannot move checkpoint into place at " + path);
  }
}

Checkpoint load_checkpoint(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw CheckpointError("cannot open checkpoint " + path);
  }
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  if (bytes.size() < kMagicLen + 8 ||
      bytes.compare(0, kMagicLen, kMagic) != 0) {
    throw CheckpointError(path + " is not a URWK1 checkpoint");
  }
  const auto header_len = get<std::uint64_t>(bytes.data() + kMagicLen);
  const std::size_t payload_start = kMagicLen + 8 + header_len;
  if (payload_start > bytes.size()) {
    throw CheckpointError(path + ": truncated header");
  }
  json header;
  try {
    header = json::parse(bytes.substr(kMagicLen + 8, header_len));
  } catch (const json::exception &e) {
    throw CheckpointError(path + ": corrupt header: " + e.what());
  }
  Checkpoint ckpt;
  ckpt.meta = header.value("meta", json::object());
  const std::size_t payload_len = bytes.size() - payload_start;
  const char *payload = bytes.data() + payload_start;
  for (const json &t : header.at("tensors")) {
    CheckpointEntry e;
    e.name = t.at("name").get<std::string>();
    e.shape = t.at("shape").get<Shape>();
    const std::string dtype = t.at("dtype").get<std::string>();
    const auto offset = t.at("offset").get<std::size_t>();
    const auto nbytes = t.at("nbytes").get<std::size_t>();
    const std::size_t width = dtype == "f32" ? 4 : dtype == "f64" ? 8 : 0;
    if (width == 0) {
      throw CheckpointError(path + ": tensor " + e.name +
                            " has unknown dtype " + dtype);
    }
    const std::size_t n = shape_numel(e.shape);
    if (nbytes != n * width || offset + nbytes > payload_len) {
      throw CheckpointError(path + ": tensor " + e.name +
                            " extends past the payload");
    }
    e.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const char *p = payload + offset + i * width;
      e.values[i] = width == 4 ? static_cast<double>(get<float>(p))
                               : get<double>(p);
    }
    ckpt.tensors.push_back(std::move(e));
  }
  return ckpt;
}

std::vector<CheckpointEntry> snapshot(const ParamList &params) {
  std::vector<CheckpointEntry> out;
  out.reserve(params.size());
  for (const auto &[name, tensor] : params) {
    const auto data = tensor.data();
    out.push_back({name, tensor.shape(), {data.begin(), data.end()}});
  }
  return out;
}

void restore(const Checkpoint &ckpt, const ParamList &params) {
  // Validate everything before touching any parameter.
  std::vector<const CheckpointEntry *> matched;
  matched.reserve(params.size());
  for (const auto &[name, tensor] : params) {
    const CheckpointEntry *e = ckpt.find(name);
    if (e == nullptr) {
      throw CheckpointError("checkpoint is missing tensor " + name);
    }
    if (e->shape != tensor.shape()) {
      throw CheckpointError("shape mismatch for tensor " + name +
                            ": checkpoint " + shape_str(e->shape) +
                            ", model " + shape_str(tensor.shape()));
    }
    matched.push_back(e);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].second;
    std::copy(matched[i]->values.begin(), matched[i]->values.end(),
              t.mutable_data().begin());
  }
}

} // namespace urwkv
