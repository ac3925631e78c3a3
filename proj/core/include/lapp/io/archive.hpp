#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace lapp::io {

// One named float64 array; the only value type checkpoint files hold.
struct ArchiveEntry {
  std::string name;
  std::vector<double> values;
};

// Ordered named-array container with a fixed little-endian binary layout:
//
//   magic "LAPPCKPT" | u32 version | u32 byte-order mark 0x01020304
//   | u64 entry count | entries... | u64 file hash
//
//   entry: u64 name length | name bytes | u64 value count
//          | values (8 bytes each) | u64 entry hash
//
// Entry hashes are FNV-1a over the entry's own serialized bytes (length
// fields included); the file hash covers every byte before it. Integers and
// strings ride inside float64 lanes via memcpy, never numeric conversion, so
// every field round-trips bit-exactly (NaN payloads included).
class Archive {
 public:
  static constexpr std::uint32_t kVersion = 1;

  std::size_t size() const { return entries_.size(); }
  bool has(const std::string& name) const;
  const std::vector<ArchiveEntry>& entries() const { return entries_; }

  // Duplicate names are rejected: every entry is addressable.
  void add(std::string name, std::vector<double> values);
  void add_scalar(std::string name, double v);
  void add_u64(std::string name, std::uint64_t v);
  void add_i64s(std::string name, const std::vector<std::int64_t>& v);
  // Lane 0 carries the byte length; the raw bytes follow, zero-padded.
  void add_string(std::string name, const std::string& s);

  // Lookups throw std::runtime_error naming the missing entry.
  const std::vector<double>& values(const std::string& name) const;
  double scalar(const std::string& name) const;
  std::uint64_t u64(const std::string& name) const;
  std::vector<std::int64_t> i64s(const std::string& name) const;
  std::string string(const std::string& name) const;

 private:
  const ArchiveEntry& find(const std::string& name) const;

  std::vector<ArchiveEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Serializes to a temporary file in the target directory, then renames, so a
// crash mid-write never leaves a half-written checkpoint at `path`.
void write_archive(const std::string& path, const Archive& a);

// Reads and fully verifies (magic, version, byte order, bounds, every
// checksum) before returning; a truncated or corrupted file throws
// std::runtime_error and yields no partial archive.
Archive read_archive(const std::string& path);

}  // namespace lapp::io
