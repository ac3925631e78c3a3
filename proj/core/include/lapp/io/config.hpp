#pragma once

#include <string>

#include "lapp/annotation/annotator.hpp"
#include "lapp/envs/env.hpp"
#include "lapp/loop/loop.hpp"
#include "lapp/preference/predictor.hpp"
#include "lapp/rl/policy.hpp"
#include "lapp/rl/ppo.hpp"
#include "lapp/trainer/trainer.hpp"

namespace lapp::io {

// One run, fully specified: every module's config plus the few run-level
// strings (environment choice, artifact paths). Lives on disk as a flat
// `section.key = value` text file with full-line # comments:
//
//   version = 1
//   env.name = gait_walker
//   loop.beta = 1.0
//   policy.hidden = 64, 64
//   annotator.schedule = 0: -1*tracking_error; 40: 1*cadence
//
// Every key has the default given by the struct initializers, so the empty
// file is a valid config. Unknown and duplicate keys are rejected with the
// file name and line number.
struct RunConfig {
  static constexpr int kVersion = 1;

  int version = kVersion;
  std::string env_name = "point_mass";  // point_mass | gait_walker
  std::string replay_file;  // label table for the replay annotator backend
  std::string prompt_file;  // LLM prompt template; empty = built-in for env

  envs::EnvConfig env;
  rl::PolicyConfig policy;
  rl::PPOConfig ppo;
  pref::PredictorConfig predictor;
  trainer::TrainerConfig trainer;
  loop::LoopConfig loop;
  annot::AnnotatorConfig annotator;

  // Section validates plus the run-level fields; throws std::invalid_argument.
  void validate() const;

  bool operator==(const RunConfig&) const = default;
};

// Parse + validate + fill defaults. Errors carry `origin:line:` and name the
// offending key. load_config reads the file first (missing file is an error).
RunConfig parse_config(const std::string& text,
                       const std::string& origin = "<config>");
RunConfig load_config(const std::string& path);

// Every key written explicitly in a fixed order, grouped per section, with
// the schema version first. parse_config(serialize_config(c)) == c for any
// valid config, doubles bit for bit.
std::string serialize_config(const RunConfig& cfg);

// Shortest float64 text that parses back to the same bits ("nan" for NaN).
std::string format_double(double v);

// Oracle schedule grammar: stages split on ';', each
// `from_epoch: term, term, ...` with term = `weight*feature` or `feature`
// (weight 1). The empty string is the empty schedule.
std::vector<annot::OracleStage> parse_schedule(const std::string& text);
std::string format_schedule(const std::vector<annot::OracleStage>& schedule);

}  // namespace lapp::io
