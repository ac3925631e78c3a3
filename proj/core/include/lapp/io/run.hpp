#pragma once

#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "lapp/io/config.hpp"
#include "lapp/loop/loop.hpp"

namespace lapp::io {

// Environment constructor for cfg.env_name; each call makes an independent
// instance.
loop::EnvFactory build_env_factory(const RunConfig& cfg);

// The configured annotator backend: oracle (needs a non-empty schedule),
// replay (needs annotator.replay_file), or llm (HTTP transport; credentials
// come from the ANNOTATOR_API_KEY environment variable and are never
// logged).
std::unique_ptr<annot::Annotator> build_annotator(const RunConfig& cfg,
                                                  loop::LogFn log = {});

loop::LappLoop build_loop(const RunConfig& cfg, annot::Annotator* annotator,
                          loop::LogFn log = {});

// Tees every raw label as a replay-format JSONL line ({"pair_hash", "label"})
// so any run leaves an audit trail that `--annotator replay` can reproduce
// bit for bit. Forwarding changes nothing about the labels themselves.
class RecordingAnnotator : public annot::Annotator {
 public:
  RecordingAnnotator(annot::Annotator& inner, const std::string& path);

  std::vector<annot::RawLabel> annotate(
      std::span<const annot::SegmentPair> batch) override;
  void set_stage(std::size_t epoch) override { inner_.set_stage(epoch); }

 private:
  annot::Annotator& inner_;
  std::ofstream out_;
};

// Single writer per output directory: <dir>/.lapp.lock holds the owner's
// pid, created exclusively and removed on destruction. A lock whose process
// no longer exists counts as stale and is replaced; a live one is an error
// naming the pid and the file.
class DirLock {
 public:
  explicit DirLock(const std::string& dir);
  ~DirLock();

  DirLock(DirLock&& other) noexcept;
  DirLock& operator=(DirLock&&) = delete;
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  bool held_ = false;
};

// Interchange files, one JSON record per line. Segments and triples use the
// canonical segment JSON; pairs are {"a": segment, "b": segment}.
void write_segments_jsonl(const std::string& path,
                          const std::vector<pref::TrajectorySegment>& segments);
std::vector<pref::TrajectorySegment> read_segments_jsonl(const std::string& path);

void write_pairs_jsonl(const std::string& path,
                       const std::vector<annot::SegmentPair>& pairs);
std::vector<annot::SegmentPair> read_pairs_jsonl(const std::string& path);

void write_triples_jsonl(const std::string& path,
                         const std::vector<pref::PreferenceTriple>& triples);
std::vector<pref::PreferenceTriple> read_triples_jsonl(const std::string& path);

}  // namespace lapp::io
