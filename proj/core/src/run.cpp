#include "lapp/io/run.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "lapp/annotation/llm.hpp"
#include "lapp/annotation/oracle.hpp"
#include "lapp/annotation/prompt.hpp"
#include "lapp/annotation/replay.hpp"
#include "lapp/envs/gait_walker.hpp"
#include "lapp/envs/point_mass.hpp"

namespace lapp::io {

namespace {

template <typename Fn>
void for_each_line(const std::string& path, const char* what, Fn fn) {
  std::ifstream f(path);
  if (!f)
    throw std::runtime_error(std::string(what) + ": cannot open '" + path + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      fn(line);
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string(what) + ": " + path + ":" +
                               std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::ofstream open_out(const std::string& path, const char* what,
                       std::ios::openmode mode = std::ios::trunc) {
  std::ofstream f(path, mode);
  if (!f)
    throw std::runtime_error(std::string(what) + ": cannot write '" + path + "'");
  return f;
}

}  // namespace

loop::EnvFactory build_env_factory(const RunConfig& cfg) {
  const envs::EnvConfig ecfg = cfg.env;
  if (cfg.env_name == "point_mass")
    return [ecfg] { return std::make_unique<envs::PointMassEnv>(ecfg); };
  if (cfg.env_name == "gait_walker")
    return [ecfg] { return std::make_unique<envs::GaitWalkerEnv>(ecfg); };
  throw std::invalid_argument("config: unknown env.name '" + cfg.env_name + "'");
}

std::unique_ptr<annot::Annotator> build_annotator(const RunConfig& cfg,
                                                  loop::LogFn log) {
  switch (cfg.annotator.backend) {
    case annot::AnnotatorBackend::oracle:
      if (cfg.annotator.schedule.empty())
        throw std::invalid_argument(
            "config: annotator.schedule must list criteria for the oracle "
            "backend");
      return std::make_unique<annot::OracleAnnotator>(
          cfg.annotator.schedule, cfg.annotator.dt, cfg.annotator.tie_tolerance);
    case annot::AnnotatorBackend::replay:
      if (cfg.replay_file.empty())
        throw std::invalid_argument(
            "config: annotator.replay_file is required for the replay backend");
      return std::make_unique<annot::ReplayAnnotator>(
          annot::ReplayAnnotator::from_file(cfg.replay_file));
    case annot::AnnotatorBackend::llm: {
      annot::PromptTemplate tpl =
          cfg.prompt_file.empty()
              ? (cfg.env_name == "gait_walker" ? annot::gait_walker_template()
                                               : annot::point_mass_template())
              : annot::load_template(cfg.prompt_file);
      return std::make_unique<annot::LlmAnnotator>(
          cfg.annotator, std::move(tpl),
          annot::http_post_transport(cfg.annotator.llm), log);
    }
  }
  throw std::logic_error("config: unhandled annotator backend");
}

loop::LappLoop build_loop(const RunConfig& cfg, annot::Annotator* annotator,
                          loop::LogFn log) {
  return loop::LappLoop(cfg.loop, cfg.predictor, cfg.trainer, cfg.policy,
                        cfg.ppo, build_env_factory(cfg), annotator,
                        std::move(log));
}

RecordingAnnotator::RecordingAnnotator(annot::Annotator& inner,
                                       const std::string& path)
    : inner_(inner), out_(path, std::ios::app) {
  if (!out_)
    throw std::runtime_error("annotate: cannot write label log '" + path + "'");
}

std::vector<annot::RawLabel> RecordingAnnotator::annotate(
    std::span<const annot::SegmentPair> batch) {
  std::vector<annot::RawLabel> labels = inner_.annotate(batch);
  for (std::size_t i = 0; i < batch.size() && i < labels.size(); ++i) {
    out_ << "{\"pair_hash\": \""
         << annot::pair_hash_hex(pref::pair_hash(batch[i].a, batch[i].b))
         << "\", \"label\": " << labels[i] << "}\n";
  }
  out_.flush();
  return labels;
}

DirLock::DirLock(const std::string& dir) : path_(dir + "/.lapp.lock") {
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd >= 0) {
      const std::string pid = std::to_string(::getpid()) + "\n";
      // Best effort; the lock works even if the pid never lands.
      (void)!::write(fd, pid.data(), pid.size());
      ::close(fd);
      held_ = true;
      return;
    }
    if (errno != EEXIST)
      throw std::runtime_error("lock: cannot create '" + path_ +
                               "': " + std::strerror(errno));

    long pid = 0;
    {
      std::ifstream f(path_);
      f >> pid;
    }
    const bool stale =
        pid > 0 && ::kill(static_cast<pid_t>(pid), 0) == -1 && errno == ESRCH;
    if (!stale || attempt > 0)
      throw std::runtime_error(
          "lock: output directory already in use by pid " +
          std::to_string(pid) + "; remove '" + path_ +
          "' if that run is gone");
    std::filesystem::remove(path_);
  }
}

DirLock::~DirLock() {
  if (held_) {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
}

DirLock::DirLock(DirLock&& other) noexcept
    : path_(std::move(other.path_)), held_(other.held_) {
  other.held_ = false;
}

void write_segments_jsonl(const std::string& path,
                          const std::vector<pref::TrajectorySegment>& segments) {
  auto f = open_out(path, "segments");
  for (const auto& s : segments) f << pref::segment_to_json(s) << "\n";
}

std::vector<pref::TrajectorySegment> read_segments_jsonl(const std::string& path) {
  std::vector<pref::TrajectorySegment> out;
  for_each_line(path, "segments", [&out](const std::string& line) {
    out.push_back(pref::segment_from_json(line));
  });
  return out;
}

void write_pairs_jsonl(const std::string& path,
                       const std::vector<annot::SegmentPair>& pairs) {
  auto f = open_out(path, "pairs");
  for (const auto& p : pairs)
    f << "{\"a\": " << pref::segment_to_json(p.a)
      << ", \"b\": " << pref::segment_to_json(p.b) << "}\n";
}

std::vector<annot::SegmentPair> read_pairs_jsonl(const std::string& path) {
  std::vector<annot::SegmentPair> out;
  for_each_line(path, "pairs", [&out](const std::string& line) {
    const nlohmann::json j = nlohmann::json::parse(line);
    annot::SegmentPair p;
    p.a = pref::segment_from_json(j.at("a").dump());
    p.b = pref::segment_from_json(j.at("b").dump());
    out.push_back(std::move(p));
  });
  return out;
}

void write_triples_jsonl(const std::string& path,
                         const std::vector<pref::PreferenceTriple>& triples) {
  auto f = open_out(path, "dataset");
  for (const auto& t : triples) f << pref::triple_to_json(t) << "\n";
}

std::vector<pref::PreferenceTriple> read_triples_jsonl(const std::string& path) {
  std::vector<pref::PreferenceTriple> out;
  for_each_line(path, "dataset", [&out](const std::string& line) {
    out.push_back(pref::triple_from_json(line));
  });
  return out;
}

}  // namespace lapp::io
