#include "lapp/io/archive.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "lapp/numerics/rng.hpp"

namespace lapp::io {

namespace {

constexpr char kMagic[8] = {'L', 'A', 'P', 'P', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kByteOrderMark = 0x01020304u;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

// Cursor over the raw file bytes; every read is bounds-checked so a
// truncated file fails cleanly instead of reading past the end.
struct Reader {
  const unsigned char* data;
  std::size_t size;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) {
    if (size - pos < n)
      throw std::runtime_error(std::string("checkpoint: truncated file (") +
                               what + ")");
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(data[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(data[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
};

}  // namespace

bool Archive::has(const std::string& name) const {
  return index_.find(name) != index_.end();
}

void Archive::add(std::string name, std::vector<double> values) {
  if (name.empty()) throw std::invalid_argument("Archive: empty entry name");
  if (!index_.emplace(name, entries_.size()).second)
    throw std::invalid_argument("Archive: duplicate entry '" + name + "'");
  entries_.push_back({std::move(name), std::move(values)});
}

void Archive::add_scalar(std::string name, double v) {
  add(std::move(name), std::vector<double>{v});
}

void Archive::add_u64(std::string name, std::uint64_t v) {
  add(std::move(name), std::vector<double>{std::bit_cast<double>(v)});
}

void Archive::add_i64s(std::string name, const std::vector<std::int64_t>& v) {
  std::vector<double> lanes(v.size());
  if (!v.empty()) std::memcpy(lanes.data(), v.data(), v.size() * 8);
  add(std::move(name), std::move(lanes));
}

void Archive::add_string(std::string name, const std::string& s) {
  std::vector<double> lanes(1 + (s.size() + 7) / 8, 0.0);
  lanes[0] = std::bit_cast<double>(static_cast<std::uint64_t>(s.size()));
  if (!s.empty()) std::memcpy(lanes.data() + 1, s.data(), s.size());
  add(std::move(name), std::move(lanes));
}

const ArchiveEntry& Archive::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw std::runtime_error("checkpoint: missing entry '" + name + "'");
  return entries_[it->second];
}

const std::vector<double>& Archive::values(const std::string& name) const {
  return find(name).values;
}

double Archive::scalar(const std::string& name) const {
  const auto& v = find(name).values;
  if (v.size() != 1)
    throw std::runtime_error("checkpoint: entry '" + name +
                             "' is not a scalar");
  return v[0];
}

std::uint64_t Archive::u64(const std::string& name) const {
  return std::bit_cast<std::uint64_t>(scalar(name));
}

std::vector<std::int64_t> Archive::i64s(const std::string& name) const {
  const auto& lanes = find(name).values;
  std::vector<std::int64_t> v(lanes.size());
  if (!lanes.empty()) std::memcpy(v.data(), lanes.data(), lanes.size() * 8);
  return v;
}

std::string Archive::string(const std::string& name) const {
  const auto& lanes = find(name).values;
  if (lanes.empty())
    throw std::runtime_error("checkpoint: entry '" + name +
                             "' is not a string");
  const auto len = std::bit_cast<std::uint64_t>(lanes[0]);
  if (len > (lanes.size() - 1) * 8)
    throw std::runtime_error("checkpoint: entry '" + name +
                             "' has a bad string length");
  std::string s(len, '\0');
  if (len) std::memcpy(s.data(), lanes.data() + 1, len);
  return s;
}

void write_archive(const std::string& path, const Archive& a) {
  std::vector<unsigned char> out;
  out.insert(out.end(), kMagic, kMagic + 8);
  put_u32(out, Archive::kVersion);
  put_u32(out, kByteOrderMark);
  put_u64(out, a.size());

  for (const ArchiveEntry& e : a.entries()) {
    const std::size_t start = out.size();
    put_u64(out, e.name.size());
    out.insert(out.end(), e.name.begin(), e.name.end());
    put_u64(out, e.values.size());
    for (double v : e.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
    put_u64(out, num::fnv1a64(out.data() + start, out.size() - start));
  }
  put_u64(out, num::fnv1a64(out.data(), out.size()));

  namespace fs = std::filesystem;
  const fs::path target(path);
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("checkpoint: cannot write '" + path + "'");
    f.write(reinterpret_cast<const char*>(out.data()),
            static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
  }
  fs::rename(tmp, target);
}

Archive read_archive(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(f),
                                   std::istreambuf_iterator<char>()};

  Reader r{bytes.data(), bytes.size()};
  r.need(8, "magic");
  if (std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
  r.pos = 8;

  const std::uint32_t version = r.u32("version");
  if (version != Archive::kVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version) + " (supported: " +
                             std::to_string(Archive::kVersion) + ")");
  if (r.u32("byte-order mark") != kByteOrderMark)
    throw std::runtime_error("checkpoint: byte-order mark mismatch");

  const std::uint64_t count = r.u64("entry count");
  Archive a;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t start = r.pos;
    const std::uint64_t name_len = r.u64("entry name length");
    r.need(name_len, "entry name");
    std::string name(reinterpret_cast<const char*>(bytes.data() + r.pos),
                     name_len);
    r.pos += name_len;

    const std::uint64_t n_values = r.u64("entry value count");
    if (n_values > (bytes.size() - r.pos) / 8)
      throw std::runtime_error("checkpoint: truncated file (entry '" + name +
                               "' values)");
    std::vector<double> values(n_values);
    for (std::uint64_t j = 0; j < n_values; ++j)
      values[j] = std::bit_cast<double>(r.u64("entry value"));

    const std::uint64_t stored = r.u64("entry checksum");
    const std::uint64_t actual =
        num::fnv1a64(bytes.data() + start, r.pos - 8 - start);
    if (stored != actual)
      throw std::runtime_error("checkpoint: checksum mismatch in entry '" +
                               name + "'");
    a.add(std::move(name), std::move(values));
  }

  const std::size_t hashed = r.pos;
  const std::uint64_t stored = r.u64("file checksum");
  if (stored != num::fnv1a64(bytes.data(), hashed))
    throw std::runtime_error("checkpoint: file checksum mismatch");
  return a;
}

}  // namespace lapp::io
