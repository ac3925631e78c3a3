#include "lapp/annotation/replay.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace lapp::annot {

std::string pair_hash_hex(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return s;
}

ReplayAnnotator::ReplayAnnotator(std::map<std::uint64_t, RawLabel> table)
    : table_(std::move(table)) {
  for (const auto& [hash, label] : table_)
    if (label < 0 || label > 3)
      throw std::invalid_argument("replay label outside 0..3 for pair " +
                                  pair_hash_hex(hash));
}

ReplayAnnotator ReplayAnnotator::from_file(const std::string& path) {
  return ReplayAnnotator(read_replay_file(path));
}

std::vector<RawLabel> ReplayAnnotator::annotate(
    std::span<const SegmentPair> batch) {
  std::vector<RawLabel> out;
  out.reserve(batch.size());
  for (const auto& p : batch) {
    const std::uint64_t h = pref::pair_hash(p.a, p.b);
    auto it = table_.find(h);
    if (it == table_.end())
      throw std::runtime_error("replay file has no label for pair " +
                               pair_hash_hex(h));
    out.push_back(it->second);
  }
  return out;
}

std::map<std::uint64_t, RawLabel> read_replay_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open replay file: " + path);
  std::map<std::uint64_t, RawLabel> table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      const std::string hex = j.at("pair_hash").get<std::string>();
      const int label = j.at("label").get<int>();
      if (hex.size() != 16)
        throw std::runtime_error("pair_hash must be 16 hex digits");
      const std::uint64_t h = std::stoull(hex, nullptr, 16);
      if (label < 0 || label > 3)
        throw std::runtime_error("label outside 0..3");
      table[h] = label;
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": bad replay record: " + e.what());
    }
  }
  return table;
}

void write_replay_file(const std::string& path,
                       const std::map<std::uint64_t, RawLabel>& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write replay file: " + path);
  for (const auto& [hash, label] : table) {
    nlohmann::json j;
    j["label"] = label;
    j["pair_hash"] = pair_hash_hex(hash);
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace lapp::annot
