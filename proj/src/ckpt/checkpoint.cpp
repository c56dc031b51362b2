#include "terra/ckpt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <functional>
#include <map>

#include "terra/core/hash.hpp"
#include "terra/raster/io.hpp"

namespace terra::ckpt {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename U>
void put(std::vector<uint8_t>& out, U v) {
  uint8_t b[sizeof(U)];
  std::memcpy(b, &v, sizeof(U));
  out.insert(out.end(), b, b + sizeof(U));
}

template <typename U>
U get(std::span<const uint8_t> bytes, size_t& pos) {
  if (pos + sizeof(U) > bytes.size()) throw FormatError("checkpoint truncated");
  U v;
  std::memcpy(&v, bytes.data() + pos, sizeof(U));
  pos += sizeof(U);
  return v;
}

// Upgrades a header of version N to version N + 1.
using Migration = std::function<nlohmann::json(const nlohmann::json&)>;

// v1 headers: {"parameters": [{"name", "shape"}], "meta": {...}}; no header hash,
// all tensors trainable, kind kept in meta.
nlohmann::json migrate_v1(const nlohmann::json& h) {
  nlohmann::json out;
  const auto& meta = h.value("meta", nlohmann::json::object());
  out["kind"] = meta.value("kind", std::string("unknown"));
  out["config"] = meta.value("config", nlohmann::json::object());
  out["metadata"] = meta;
  out["metadata"].erase("kind");
  out["metadata"].erase("config");
  out["metadata"]["migrated_from"] = 1;
  out["tensors"] = nlohmann::json::array();
  for (const auto& p : h.at("parameters"))
    out["tensors"].push_back({{"name", p.at("name")}, {"shape", p.at("shape")}, {"dtype", "f32"}, {"trainable", true},
                              {"group", "param"}});
  return out;
}

const std::map<uint32_t, Migration>& migrations() {
  static const std::map<uint32_t, Migration> table{{1, migrate_v1}};
  return table;
}

}  // namespace

std::string Checkpoint::config_hash() const { return to_hex(hash_string(config.dump())); }

std::string params_hash(const ad::ParameterSet& params) {
  std::vector<uint8_t> bytes;
  for (const auto& [name, p] : params) {
    bytes.insert(bytes.end(), name.begin(), name.end());
    for (int64_t d : p.value.shape()) put<int64_t>(bytes, d);
    for (float v : p.value.data()) put(bytes, v);
  }
  return to_hex(hash_bytes(bytes));
}

std::vector<uint8_t> serialize(const Checkpoint& ck) {
  nlohmann::json tensors = nlohmann::json::array();
  std::vector<const ad::Tensor<float>*> order;
  auto add = [&](const std::string& name, const ad::Tensor<float>& t, bool trainable, const char* group) {
    tensors.push_back({{"name", name}, {"shape", t.shape()}, {"dtype", "f32"}, {"trainable", trainable}, {"group", group}});
    order.push_back(&t);
  };
  for (const auto& [name, p] : ck.params) add(name, p.value, p.trainable, "param");
  if (ck.optimizer) {
    for (const auto& [name, t] : ck.optimizer->first_moment) add(name, t, true, "adam_m");
    for (const auto& [name, t] : ck.optimizer->second_moment) add(name, t, true, "adam_v");
  }

  std::vector<uint8_t> payload;
  for (const auto* t : order)
    for (float v : t->data()) put(payload, v);

  nlohmann::json header{{"kind", ck.kind},
                        {"config", ck.config},
                        {"config_hash", ck.config_hash()},
                        {"metadata", ck.metadata.is_null() ? nlohmann::json::object() : ck.metadata},
                        {"tensors", tensors},
                        {"payload_bytes", payload.size()},
                        {"payload_hash", to_hex(hash_bytes(payload))}};
  if (ck.optimizer) header["optimizer_step"] = ck.optimizer->step;
  const std::string hs = header.dump();

  std::vector<uint8_t> out{'T', 'F', 'C', 'K'};
  put<uint32_t>(out, kFormatVersion);
  put<uint32_t>(out, static_cast<uint32_t>(hs.size()));
  out.insert(out.end(), hs.begin(), hs.end());
  put<uint64_t>(out, hash_bytes({reinterpret_cast<const uint8_t*>(hs.data()), hs.size()}));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Checkpoint deserialize(std::span<const uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "TFCK", 4) != 0) throw FormatError("not a TFCK checkpoint");
  size_t pos = 4;
  const auto version = get<uint32_t>(bytes, pos);
  const auto hlen = get<uint32_t>(bytes, pos);
  if (pos + hlen > bytes.size()) throw FormatError("checkpoint truncated in header");
  const auto hbytes = bytes.subspan(pos, hlen);
  pos += hlen;

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hbytes.begin(), hbytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is not JSON: ") + e.what());
  }
  if (version >= 2) {
    const auto stored = get<uint64_t>(bytes, pos);
    if (stored != hash_bytes(hbytes)) throw FormatError("checkpoint header hash mismatch");
  }
  if (version > kFormatVersion) throw FormatError("checkpoint version " + std::to_string(version) + " is newer than supported");
  for (uint32_t v = version; v < kFormatVersion; ++v) {
    auto it = migrations().find(v);
    if (it == migrations().end()) throw FormatError("no migration from checkpoint version " + std::to_string(v));
    header = it->second(header);
  }

  const auto payload = bytes.subspan(pos);
  size_t expected = 0;
  for (const auto& t : header.at("tensors")) {
    if (t.value("dtype", "f32") != "f32") throw FormatError("unsupported tensor dtype");
    expected += static_cast<size_t>(ad::shape_numel(t.at("shape").get<ad::Shape>())) * 4;
  }
  if (payload.size() != expected)
    throw FormatError("checkpoint payload is " + std::to_string(payload.size()) + " bytes, header declares " +
                      std::to_string(expected));
  if (header.contains("payload_hash") && header["payload_hash"].get<std::string>() != to_hex(hash_bytes(payload)))
    throw FormatError("checkpoint payload hash mismatch");

  Checkpoint ck;
  ck.kind = header.value("kind", std::string());
  ck.config = header.value("config", nlohmann::json::object());
  ck.metadata = header.value("metadata", nlohmann::json::object());
  size_t off = 0;
  for (const auto& t : header.at("tensors")) {
    ad::Shape shape = t.at("shape").get<ad::Shape>();
    std::vector<float> data(static_cast<size_t>(ad::shape_numel(shape)));
    std::memcpy(data.data(), payload.data() + off, data.size() * 4);
    off += data.size() * 4;
    ad::Tensor<float> tensor(shape, std::move(data));
    const std::string name = t.at("name").get<std::string>();
    const std::string group = t.value("group", "param");
    if (group == "param") {
      ck.params.add(name, std::move(tensor), t.value("trainable", true));
    } else {
      if (!ck.optimizer) ck.optimizer.emplace();
      (group == "adam_m" ? ck.optimizer->first_moment : ck.optimizer->second_moment).emplace(name, std::move(tensor));
    }
  }
  if (header.contains("optimizer_step")) {
    if (!ck.optimizer) ck.optimizer.emplace();
    ck.optimizer->step = header["optimizer_step"].get<int64_t>();
  }
  return ck;
}

void save(const std::filesystem::path& path, const Checkpoint& ck) { raster::write_file_atomic(path, serialize(ck)); }

Checkpoint load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw InvalidArgument("checkpoint not found: " + path.string());
  return deserialize(raster::read_file(path));
}

std::string bytes_hash(std::span<const uint8_t> bytes) { return to_hex(hash_bytes(bytes)); }

std::string file_hash(const std::filesystem::path& path) { return bytes_hash(raster::read_file(path)); }

}  // namespace terra::ckpt
