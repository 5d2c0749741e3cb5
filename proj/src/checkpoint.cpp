#include "mncd/checkpoint.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

namespace mncd {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr char kMagic[8] = {'M', 'N', 'C', 'D', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename U>
void put_le(std::string& out, U value) {
  char buf[sizeof(U)];
  std::memcpy(buf, &value, sizeof(U));
  out.append(buf, sizeof(U));
}

template <typename U>
U get_le(const std::string& in, std::size_t offset) {
  U value;
  std::memcpy(&value, in.data() + offset, sizeof(U));
  return value;
}

NamedTensor snapshot(const std::string& name, const Tensor& t) {
  return {name, t.to(DType::f32)};
}

}  // namespace

Checkpoint make_checkpoint(const nn::Module& model, const AdamState* adam,
                           const std::string& config_json, std::int64_t step) {
  Checkpoint ck;
  ck.config_json = config_json.empty() ? "{}" : config_json;
  ck.step = step;
  for (const auto& p : model.parameters()) ck.parameters.push_back(snapshot(p.name, p.value));
  for (const auto& b : model.buffers()) ck.buffers.push_back(snapshot(b.name, b.value));
  if (adam != nullptr) {
    AdamState copy;
    copy.t = adam->t;
    for (const auto& [name, m] : adam->m) copy.m[name] = m.to(DType::f32);
    for (const auto& [name, v] : adam->v) copy.v[name] = v.to(DType::f32);
    ck.adam = std::move(copy);
  }
  return ck;
}

void write_checkpoint(const fs::path& path, const Checkpoint& ck) {
  json manifest = json::array();
  std::string payload;
  auto add = [&](const std::string& name, const char* kind, const Tensor& t) {
    const Tensor f = t.dtype() == DType::f32 ? t : t.to(DType::f32);
    const auto values = f.values<float>();
    manifest.push_back({{"name", name},
                        {"kind", kind},
                        {"shape", f.shape()},
                        {"offset", payload.size()},
                        {"count", values.size()}});
    payload.append(reinterpret_cast<const char*>(values.data()), values.size_bytes());
  };
  for (const auto& p : ck.parameters) add(p.name, "param", p.value);
  for (const auto& b : ck.buffers) add(b.name, "buffer", b.value);
  if (ck.adam) {
    for (const auto& [name, m] : ck.adam->m) add(name, "adam_m", m);
    for (const auto& [name, v] : ck.adam->v) add(name, "adam_v", v);
  }

  json meta;
  meta["config"] = json::parse(ck.config_json);
  meta["step"] = ck.step;
  meta["adam_t"] = ck.adam ? json(ck.adam->t) : json(nullptr);
  meta["tensors"] = std::move(manifest);
  const std::string meta_text = meta.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, ck.version);
  put_le<std::uint64_t>(out, meta_text.size());
  out += meta_text;
  out += payload;

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw CheckpointError(path.string() + ": cannot open for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw CheckpointError(path.string() + ": write failed");
}

void checkpoint_save(const fs::path& path, const nn::Module& model, const AdamState* adam,
                     const std::string& config_json, std::int64_t step) {
  write_checkpoint(path, make_checkpoint(model, adam, config_json, step));
}

Checkpoint checkpoint_load(const fs::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw CheckpointError(path.string() + ": cannot open checkpoint");
  const std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";

  constexpr std::size_t header = sizeof(kMagic) + 4 + 8;
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError(where + "not a checkpoint (bad magic)");
  }
  if (bytes.size() < header) throw CheckpointTruncatedError(where + "truncated header");
  Checkpoint ck;
  ck.version = get_le<std::uint32_t>(bytes, sizeof(kMagic));
  if (ck.version != kCheckpointVersion) {
    throw CheckpointVersionError(where + "format version " + std::to_string(ck.version) +
                                 ", expected " + std::to_string(kCheckpointVersion));
  }
  const auto meta_len = get_le<std::uint64_t>(bytes, sizeof(kMagic) + 4);
  if (meta_len > bytes.size() - header) throw CheckpointTruncatedError(where + "truncated metadata");
  const std::size_t payload_at = header + meta_len;
  const std::size_t payload_len = bytes.size() - payload_at;

  try {
    const json meta = json::parse(bytes.substr(header, meta_len));
    ck.config_json = meta.at("config").dump();
    ck.step = meta.at("step").get<std::int64_t>();
    if (!meta.at("adam_t").is_null()) {
      ck.adam.emplace();
      ck.adam->t = meta.at("adam_t").get<std::int64_t>();
    }
    for (const auto& entry : meta.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto kind = entry.at("kind").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto count = entry.at("count").get<std::uint64_t>();
      if (static_cast<std::int64_t>(count) != shape_numel(shape)) {
        throw CheckpointError(where + "manifest count disagrees with shape for '" + name + "'");
      }
      if (offset > payload_len || count * sizeof(float) > payload_len - offset) {
        throw CheckpointTruncatedError(where + "payload ends inside tensor '" + name + "'");
      }
      Tensor t(shape, DType::f32);
      std::memcpy(t.values<float>().data(), bytes.data() + payload_at + offset,
                  count * sizeof(float));
      if (kind == "param") {
        ck.parameters.push_back({name, t});
      } else if (kind == "buffer") {
        ck.buffers.push_back({name, t});
      } else if ((kind == "adam_m" || kind == "adam_v") && ck.adam) {
        (kind == "adam_m" ? ck.adam->m : ck.adam->v)[name] = t;
      } else {
        throw CheckpointError(where + "unknown tensor kind '" + kind + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(where + "malformed metadata: " + e.what());
  } catch (const ShapeError& e) {
    throw CheckpointError(where + "malformed tensor shape: " + e.what());
  }
  return ck;
}

namespace {

void copy_named(const std::vector<NamedTensor>& stored, const std::string& what,
                const std::vector<std::pair<std::string, Tensor>>& targets) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& s : stored) {
    if (!by_name.emplace(s.name, &s.value).second) {
      throw CheckpointError("checkpoint lists " + what + " '" + s.name + "' twice");
    }
  }
  for (const auto& [name, target] : targets) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw CheckpointError("checkpoint is missing " + what + " '" + name + "'");
    }
    if (it->second->shape() != target.shape()) {
      throw CheckpointShapeError("shape mismatch for " + what + " '" + name + "': checkpoint " +
                                 shape_str(it->second->shape()) + ", model " +
                                 shape_str(target.shape()));
    }
  }
  if (by_name.size() != targets.size()) {
    std::set<std::string> known;
    for (const auto& [name, _] : targets) known.insert(name);
    for (const auto& [name, _] : by_name) {
      if (!known.count(name)) {
        throw CheckpointError("checkpoint has unexpected " + what + " '" + name + "'");
      }
    }
  }
  for (const auto& [name, target] : targets) {
    Tensor dst = target;
    dst.assign(*by_name.at(name));
  }
}

}  // namespace

void apply_checkpoint(const Checkpoint& ck, nn::Module& model, AdamState* adam) {
  std::vector<std::pair<std::string, Tensor>> params, buffers;
  for (const auto& p : model.parameters()) params.emplace_back(p.name, p.value);
  for (const auto& b : model.buffers()) buffers.emplace_back(b.name, b.value);
  copy_named(ck.parameters, "parameter", params);
  copy_named(ck.buffers, "buffer", buffers);
  if (adam != nullptr && ck.adam) {
    AdamState restored;
    restored.t = ck.adam->t;
    for (const auto& [name, value] : params) {
      auto m = ck.adam->m.find(name);
      auto v = ck.adam->v.find(name);
      if (m == ck.adam->m.end() || v == ck.adam->v.end()) continue;
      if (m->second.shape() != value.shape() || v->second.shape() != value.shape()) {
        throw CheckpointShapeError("shape mismatch for optimizer moments of '" + name + "'");
      }
      restored.m[name] = m->second.to(value.dtype());
      restored.v[name] = v->second.to(value.dtype());
    }
    *adam = std::move(restored);
  }
}

}  // namespace mncd
