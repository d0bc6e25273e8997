#include "pegan/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

namespace pegan {

static_assert(std::endian::native == std::endian::little,
              "archive payloads are written in host order and must be little-endian");

namespace {

constexpr char kMagic[8] = {'P', 'E', 'G', 'A', 'N', 'A', 'R', '1'};

void append_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t read_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

void TensorArchive::put(const std::string& name, const Tensor& tensor) {
  if (documents_.count(name)) throw UsageError("archive entry '" + name + "' already holds JSON");
  tensors_[name] = Entry{tensor.shape(), {tensor.data().begin(), tensor.data().end()}};
}

void TensorArchive::put_json(const std::string& name, const nlohmann::json& document) {
  if (tensors_.count(name)) throw UsageError("archive entry '" + name + "' already holds a tensor");
  documents_[name] = document;
}

bool TensorArchive::contains(const std::string& name) const { return tensors_.count(name) > 0; }

bool TensorArchive::contains_json(const std::string& name) const {
  return documents_.count(name) > 0;
}

Tensor TensorArchive::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw IoError("archive has no tensor '" + name + "'");
  return Tensor(it->second.shape, it->second.values);
}

void TensorArchive::load_into(const std::string& name, Tensor& target) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw IoError("archive has no tensor '" + name + "'");
  if (it->second.shape != target.shape())
    throw IoError("archive tensor '" + name + "' has shape " + shape_str(it->second.shape) +
                  ", expected " + shape_str(target.shape()));
  auto dst = target.mutable_data();
  std::copy(it->second.values.begin(), it->second.values.end(), dst.begin());
}

const nlohmann::json& TensorArchive::get_json(const std::string& name) const {
  auto it = documents_.find(name);
  if (it == documents_.end()) throw IoError("archive has no document '" + name + "'");
  return it->second;
}

std::vector<std::string> TensorArchive::tensor_names() const {
  std::vector<std::string> names;
  for (const auto& [name, _] : tensors_) names.push_back(name);
  return names;
}

std::vector<std::uint8_t> TensorArchive::serialize() const {
  // Merge both maps in name order so the payload order is canonical.
  std::set<std::string> names;
  for (const auto& [n, _] : tensors_) names.insert(n);
  for (const auto& [n, _] : documents_) names.insert(n);

  nlohmann::json entries = nlohmann::json::array();
  std::vector<std::uint8_t> payload;
  for (const auto& name : names) {
    const auto offset = payload.size();
    nlohmann::json e;
    e["name"] = name;
    if (auto t = tensors_.find(name); t != tensors_.end()) {
      const auto& values = t->second.values;
      const auto* bytes = reinterpret_cast<const std::uint8_t*>(values.data());
      payload.insert(payload.end(), bytes, bytes + values.size() * sizeof(double));
      e["dtype"] = "f64";
      e["shape"] = t->second.shape;
    } else {
      const auto text = documents_.at(name).dump();
      payload.insert(payload.end(), text.begin(), text.end());
      e["dtype"] = "json";
      e["shape"] = Shape{text.size()};
    }
    e["offset"] = offset;
    e["length"] = payload.size() - offset;
    entries.push_back(std::move(e));
  }
  const auto manifest = nlohmann::json{{"entries", entries}, {"format", 1}}.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  append_u64(out, manifest.size());
  out.insert(out.end(), manifest.begin(), manifest.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

TensorArchive TensorArchive::deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw IoError("not a tensor archive (bad magic)");
  const auto manifest_len = read_u64(bytes.data() + 8);
  if (manifest_len > bytes.size() - 16) throw IoError("tensor archive truncated (manifest)");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + manifest_len);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corrupt archive manifest: ") + e.what());
  }
  const std::size_t base = 16 + manifest_len;
  const std::size_t payload_size = bytes.size() - base;

  TensorArchive archive;
  try {
    for (const auto& e : manifest.at("entries")) {
      const auto name = e.at("name").get<std::string>();
      const auto dtype = e.at("dtype").get<std::string>();
      const auto offset = e.at("offset").get<std::size_t>();
      const auto length = e.at("length").get<std::size_t>();
      if (offset > payload_size || length > payload_size - offset)
        throw IoError("archive entry '" + name + "' exceeds payload");
      const auto* start = bytes.data() + base + offset;
      if (dtype == "f64") {
        const auto shape = e.at("shape").get<Shape>();
        if (shape_numel(shape) * sizeof(double) != length)
          throw IoError("archive entry '" + name + "' length does not match its shape");
        Entry entry{shape, std::vector<double>(shape_numel(shape))};
        std::memcpy(entry.values.data(), start, length);
        archive.tensors_[name] = std::move(entry);
      } else if (dtype == "json") {
        archive.documents_[name] = nlohmann::json::parse(start, start + length);
      } else {
        throw IoError("archive entry '" + name + "' has unsupported dtype " + dtype);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corrupt archive manifest: ") + e.what());
  }
  return archive;
}

void TensorArchive::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write archive " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing archive " + path.string());
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open archive " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

std::uint64_t hash_tensors(const std::vector<Tensor>& tensors) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& t : tensors) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.data().data());
    for (std::size_t i = 0; i < t.numel() * sizeof(double); ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace pegan
