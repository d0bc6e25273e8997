#ifndef PEGAN_ARCHIVE_HPP
#define PEGAN_ARCHIVE_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "pegan/tensor.hpp"

namespace pegan {

/// Named tensors plus JSON documents in a single file.
///
/// Layout: 8-byte magic "PEGANAR1", u64 little-endian manifest length, the
/// UTF-8 JSON manifest, then the payload. The manifest lists
/// {name, shape, dtype, offset, length} per entry with offsets relative to the
/// payload start; tensors are "f64" (IEEE-754 little-endian, row-major),
/// documents are "json". Entries are stored in name order, so equal contents
/// always produce identical bytes.
class TensorArchive {
 public:
  void put(const std::string& name, const Tensor& tensor);
  void put_json(const std::string& name, const nlohmann::json& document);

  bool contains(const std::string& name) const;
  bool contains_json(const std::string& name) const;
  /// Fresh leaf tensor (no gradient) copied from the entry.
  Tensor get(const std::string& name) const;
  /// Copies an entry into an existing tensor of the same shape.
  void load_into(const std::string& name, Tensor& target) const;
  const nlohmann::json& get_json(const std::string& name) const;

  std::vector<std::string> tensor_names() const;

  std::vector<std::uint8_t> serialize() const;
  static TensorArchive deserialize(const std::vector<std::uint8_t>& bytes);

  void save(const std::filesystem::path& path) const;
  static TensorArchive load(const std::filesystem::path& path);

 private:
  struct Entry {
    Shape shape;
    std::vector<double> values;
  };
  std::map<std::string, Entry> tensors_;
  std::map<std::string, nlohmann::json> documents_;
};

/// FNV-1a over the raw bytes of the listed tensors, in order.
std::uint64_t hash_tensors(const std::vector<Tensor>& tensors);

}  // namespace pegan

#endif  // PEGAN_ARCHIVE_HPP
