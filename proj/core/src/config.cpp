#include "lapp/io/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string_view>
#include <unordered_map>
#include <unordered_set>

namespace lapp::io {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& detail) {
  throw std::invalid_argument(detail);
}

double parse_f64(const std::string& raw) {
  double v = 0.0;
  const char* end = raw.data() + raw.size();
  auto [p, ec] = std::from_chars(raw.data(), end, v);
  if (ec != std::errc() || p != end)
    bad_value("expected a number, got '" + raw + "'");
  return v;
}

std::uint64_t parse_unsigned(const std::string& raw) {
  std::uint64_t v = 0;
  const char* end = raw.data() + raw.size();
  auto [p, ec] = std::from_chars(raw.data(), end, v);
  if (ec != std::errc() || p != end)
    bad_value("expected a non-negative integer, got '" + raw + "'");
  return v;
}

bool parse_bool(const std::string& raw) {
  if (raw == "true") return true;
  if (raw == "false") return false;
  bad_value("expected true or false, got '" + raw + "'");
}

std::vector<std::size_t> parse_size_list(const std::string& raw) {
  std::vector<std::size_t> out;
  if (trim(raw).empty()) return out;
  for (const std::string& part : split(raw, ',')) {
    const std::string t = trim(part);
    if (t.empty()) bad_value("empty element in list '" + raw + "'");
    out.push_back(static_cast<std::size_t>(parse_unsigned(t)));
  }
  return out;
}

std::string format_size_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(v[i]);
  }
  return out;
}

// One config key: how to read a raw value into the config and how to print
// the current value back out. Accessors are generic lambdas so the same
// definition serves both const and mutable sides.
struct KeyDef {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Acc>
KeyDef f64_key(std::string key, Acc acc) {
  return {std::move(key),
          [acc](RunConfig& c, const std::string& raw) { acc(c) = parse_f64(raw); },
          [acc](const RunConfig& c) { return format_double(acc(c)); }};
}

template <typename Acc>
KeyDef size_key(std::string key, Acc acc) {
  return {std::move(key),
          [acc](RunConfig& c, const std::string& raw) {
            acc(c) = static_cast<std::size_t>(parse_unsigned(raw));
          },
          [acc](const RunConfig& c) { return std::to_string(acc(c)); }};
}

template <typename Acc>
KeyDef u64_key(std::string key, Acc acc) {
  return {std::move(key),
          [acc](RunConfig& c, const std::string& raw) { acc(c) = parse_unsigned(raw); },
          [acc](const RunConfig& c) { return std::to_string(acc(c)); }};
}

template <typename Acc>
KeyDef bool_key(std::string key, Acc acc) {
  return {std::move(key),
          [acc](RunConfig& c, const std::string& raw) { acc(c) = parse_bool(raw); },
          [acc](const RunConfig& c) { return acc(c) ? "true" : "false"; }};
}

template <typename Acc>
KeyDef string_key(std::string key, Acc acc) {
  return {std::move(key),
          [acc](RunConfig& c, const std::string& raw) { acc(c) = raw; },
          [acc](const RunConfig& c) { return acc(c); }};
}

template <typename Acc>
KeyDef list_key(std::string key, Acc acc) {
  return {std::move(key),
          [acc](RunConfig& c, const std::string& raw) { acc(c) = parse_size_list(raw); },
          [acc](const RunConfig& c) { return format_size_list(acc(c)); }};
}

template <typename Enum, typename Acc>
KeyDef enum_key(std::string key, Acc acc,
                std::vector<std::pair<std::string, Enum>> names) {
  return {std::move(key),
          [acc, names](RunConfig& c, const std::string& raw) {
            for (const auto& [n, v] : names)
              if (n == raw) {
                acc(c) = v;
                return;
              }
            std::string allowed;
            for (const auto& [n, v] : names) {
              if (!allowed.empty()) allowed += " | ";
              allowed += n;
            }
            bad_value("expected " + allowed + ", got '" + raw + "'");
          },
          [acc, names](const RunConfig& c) {
            for (const auto& [n, v] : names)
              if (acc(c) == v) return n;
            return std::string("?");
          }};
}

std::vector<KeyDef> build_key_defs() {
  std::vector<KeyDef> d;

  d.push_back({"version",
               [](RunConfig& c, const std::string& raw) {
                 const auto v = parse_unsigned(raw);
                 if (v != static_cast<std::uint64_t>(RunConfig::kVersion))
                   bad_value("unsupported config version " + raw +
                             " (supported: " +
                             std::to_string(RunConfig::kVersion) + ")");
                 c.version = static_cast<int>(v);
               },
               [](const RunConfig& c) { return std::to_string(c.version); }});

  d.push_back({"env.name",
               [](RunConfig& c, const std::string& raw) {
                 if (raw != "point_mass" && raw != "gait_walker")
                   bad_value("expected point_mass | gait_walker, got '" + raw +
                             "'");
                 c.env_name = raw;
               },
               [](const RunConfig& c) { return c.env_name; }});
  d.push_back(f64_key("env.dt", [](auto& c) -> auto& { return c.env.dt; }));
  d.push_back(size_key("env.episode_len",
                       [](auto& c) -> auto& { return c.env.episode_len; }));
  d.push_back(f64_key("env.drag", [](auto& c) -> auto& { return c.env.drag; }));
  d.push_back(f64_key("env.action_scale",
                      [](auto& c) -> auto& { return c.env.action_scale; }));
  d.push_back(f64_key("env.command_min",
                      [](auto& c) -> auto& { return c.env.command_min; }));
  d.push_back(f64_key("env.command_max",
                      [](auto& c) -> auto& { return c.env.command_max; }));

  d.push_back(list_key("policy.hidden",
                       [](auto& c) -> auto& { return c.policy.hidden; }));
  d.push_back(f64_key("policy.init_logstd",
                      [](auto& c) -> auto& { return c.policy.init_logstd; }));
  d.push_back(f64_key("policy.logstd_min",
                      [](auto& c) -> auto& { return c.policy.logstd_min; }));
  d.push_back(f64_key("policy.logstd_max",
                      [](auto& c) -> auto& { return c.policy.logstd_max; }));
  d.push_back(f64_key("policy.lr", [](auto& c) -> auto& { return c.policy.lr; }));

  d.push_back(f64_key("ppo.gamma", [](auto& c) -> auto& { return c.ppo.gamma; }));
  d.push_back(f64_key("ppo.lambda", [](auto& c) -> auto& { return c.ppo.lambda; }));
  d.push_back(f64_key("ppo.clip_ratio",
                      [](auto& c) -> auto& { return c.ppo.clip_ratio; }));
  d.push_back(size_key("ppo.update_epochs",
                       [](auto& c) -> auto& { return c.ppo.update_epochs; }));
  d.push_back(size_key("ppo.minibatches",
                       [](auto& c) -> auto& { return c.ppo.minibatches; }));
  d.push_back(f64_key("ppo.value_coef",
                      [](auto& c) -> auto& { return c.ppo.value_coef; }));
  d.push_back(f64_key("ppo.entropy_coef",
                      [](auto& c) -> auto& { return c.ppo.entropy_coef; }));

  d.push_back(enum_key<pref::PredictorMode>(
      "predictor.mode", [](auto& c) -> auto& { return c.predictor.mode; },
      {{"markovian", pref::PredictorMode::markovian},
       {"non_markovian", pref::PredictorMode::non_markovian}}));
  d.push_back(size_key("predictor.context_length",
                       [](auto& c) -> auto& { return c.predictor.context_length; }));
  d.push_back(size_key("predictor.width",
                       [](auto& c) -> auto& { return c.predictor.width; }));
  d.push_back(size_key("predictor.heads",
                       [](auto& c) -> auto& { return c.predictor.heads; }));
  d.push_back(size_key("predictor.blocks",
                       [](auto& c) -> auto& { return c.predictor.blocks; }));
  d.push_back(bool_key("predictor.mlp_variant",
                       [](auto& c) -> auto& { return c.predictor.mlp_variant; }));
  d.push_back(list_key("predictor.mlp_hidden",
                       [](auto& c) -> auto& { return c.predictor.mlp_hidden; }));
  d.push_back(size_key("predictor.feature_dim",
                       [](auto& c) -> auto& { return c.predictor.feature_dim; }));
  d.push_back(bool_key("predictor.include_actions",
                       [](auto& c) -> auto& { return c.predictor.include_actions; }));
  d.push_back(f64_key("predictor.label_noise_eps",
                      [](auto& c) -> auto& { return c.predictor.label_noise_eps; }));

  d.push_back(size_key("trainer.pool_size",
                       [](auto& c) -> auto& { return c.trainer.pool_size; }));
  d.push_back(size_key("trainer.ensemble_size",
                       [](auto& c) -> auto& { return c.trainer.ensemble_size; }));
  d.push_back(size_key("trainer.min_epochs",
                       [](auto& c) -> auto& { return c.trainer.min_epochs; }));
  d.push_back(size_key("trainer.max_epochs",
                       [](auto& c) -> auto& { return c.trainer.max_epochs; }));
  d.push_back(f64_key("trainer.overfit_alpha",
                      [](auto& c) -> auto& { return c.trainer.overfit_alpha; }));
  d.push_back(size_key("trainer.train_parts",
                       [](auto& c) -> auto& { return c.trainer.train_parts; }));
  d.push_back(size_key("trainer.val_parts",
                       [](auto& c) -> auto& { return c.trainer.val_parts; }));
  d.push_back(size_key("trainer.batch_size",
                       [](auto& c) -> auto& { return c.trainer.batch_size; }));
  d.push_back(f64_key("trainer.lr", [](auto& c) -> auto& { return c.trainer.lr; }));

  d.push_back(size_key("loop.total_epochs",
                       [](auto& c) -> auto& { return c.loop.total_epochs; }));
  d.push_back(size_key("loop.update_interval",
                       [](auto& c) -> auto& { return c.loop.update_interval; }));
  d.push_back(size_key("loop.pairs_per_epoch",
                       [](auto& c) -> auto& { return c.loop.pairs_per_epoch; }));
  d.push_back(size_key("loop.rollouts",
                       [](auto& c) -> auto& { return c.loop.rollouts; }));
  d.push_back(size_key("loop.steps", [](auto& c) -> auto& { return c.loop.steps; }));
  d.push_back(size_key("loop.dataset_size",
                       [](auto& c) -> auto& { return c.loop.dataset_size; }));
  d.push_back(enum_key<loop::DatasetWindow>(
      "loop.window", [](auto& c) -> auto& { return c.loop.window; },
      {{"latest", loop::DatasetWindow::latest},
       {"full_process", loop::DatasetWindow::full_process}}));
  d.push_back(f64_key("loop.beta", [](auto& c) -> auto& { return c.loop.beta; }));
  d.push_back(size_key("loop.segment_len",
                       [](auto& c) -> auto& { return c.loop.segment_len; }));
  d.push_back(size_key("loop.annotation_batch",
                       [](auto& c) -> auto& { return c.loop.annotation_batch; }));
  d.push_back(bool_key("loop.standardize_rp",
                       [](auto& c) -> auto& { return c.loop.standardize_rp; }));
  d.push_back(f64_key("loop.dt", [](auto& c) -> auto& { return c.loop.dt; }));
  d.push_back(u64_key("loop.seed", [](auto& c) -> auto& { return c.loop.seed; }));

  d.push_back(enum_key<annot::AnnotatorBackend>(
      "annotator.backend", [](auto& c) -> auto& { return c.annotator.backend; },
      {{"oracle", annot::AnnotatorBackend::oracle},
       {"replay", annot::AnnotatorBackend::replay},
       {"llm", annot::AnnotatorBackend::llm}}));
  d.push_back(size_key("annotator.samples_per_pair",
                       [](auto& c) -> auto& { return c.annotator.samples_per_pair; }));
  d.push_back(size_key("annotator.batch_size",
                       [](auto& c) -> auto& { return c.annotator.batch_size; }));
  d.push_back({"annotator.schedule",
               [](RunConfig& c, const std::string& raw) {
                 c.annotator.schedule = parse_schedule(raw);
               },
               [](const RunConfig& c) {
                 return format_schedule(c.annotator.schedule);
               }});
  d.push_back(f64_key("annotator.tie_tolerance",
                      [](auto& c) -> auto& { return c.annotator.tie_tolerance; }));
  d.push_back(f64_key("annotator.dt",
                      [](auto& c) -> auto& { return c.annotator.dt; }));
  d.push_back(string_key("annotator.replay_file",
                         [](auto& c) -> auto& { return c.replay_file; }));
  d.push_back(string_key("annotator.prompt_file",
                         [](auto& c) -> auto& { return c.prompt_file; }));
  d.push_back(string_key("annotator.llm.base_url",
                         [](auto& c) -> auto& { return c.annotator.llm.base_url; }));
  d.push_back(string_key("annotator.llm.model",
                         [](auto& c) -> auto& { return c.annotator.llm.model; }));
  d.push_back(f64_key("annotator.llm.temperature",
                      [](auto& c) -> auto& { return c.annotator.llm.temperature; }));
  d.push_back(size_key("annotator.llm.max_retries",
                       [](auto& c) -> auto& { return c.annotator.llm.max_retries; }));
  d.push_back(f64_key("annotator.llm.timeout_s",
                      [](auto& c) -> auto& { return c.annotator.llm.timeout_s; }));
  return d;
}

const std::vector<KeyDef>& key_defs() {
  static const std::vector<KeyDef> defs = build_key_defs();
  return defs;
}

const std::unordered_map<std::string_view, const KeyDef*>& key_lookup() {
  static const auto* map = [] {
    auto* m = new std::unordered_map<std::string_view, const KeyDef*>();
    for (const KeyDef& d : key_defs()) (*m)[d.key] = &d;
    return m;
  }();
  return *map;
}

[[noreturn]] void parse_fail(const std::string& origin, std::size_t line,
                             const std::string& msg) {
  throw std::invalid_argument(origin + ":" + std::to_string(line) + ": " + msg);
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::vector<annot::OracleStage> parse_schedule(const std::string& text) {
  std::vector<annot::OracleStage> out;
  if (trim(text).empty()) return out;
  for (const std::string& stage_str : split(text, ';')) {
    const std::string s = trim(stage_str);
    if (s.empty()) bad_value("empty schedule stage");
    const auto colon = s.find(':');
    if (colon == std::string::npos)
      bad_value("schedule stage needs 'from_epoch: criteria' (got '" + s + "')");
    annot::OracleStage stage;
    stage.from_epoch =
        static_cast<std::size_t>(parse_unsigned(trim(s.substr(0, colon))));
    const std::string rest = trim(s.substr(colon + 1));
    if (rest.empty()) bad_value("schedule stage with no criteria");
    for (const std::string& term_str : split(rest, ',')) {
      const std::string term = trim(term_str);
      if (term.empty()) bad_value("empty schedule criterion");
      annot::OracleCriterion c;
      const auto star = term.find('*');
      if (star == std::string::npos) {
        c.feature = term;
      } else {
        c.weight = parse_f64(trim(term.substr(0, star)));
        c.feature = trim(term.substr(star + 1));
      }
      if (c.feature.empty()) bad_value("schedule criterion with no feature name");
      stage.criteria.push_back(std::move(c));
    }
    out.push_back(std::move(stage));
  }
  return out;
}

std::string format_schedule(const std::vector<annot::OracleStage>& schedule) {
  std::string out;
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (i) out += "; ";
    out += std::to_string(schedule[i].from_epoch) + ":";
    for (std::size_t j = 0; j < schedule[i].criteria.size(); ++j) {
      const auto& c = schedule[i].criteria[j];
      out += (j ? ", " : " ") + format_double(c.weight) + "*" + c.feature;
    }
  }
  return out;
}

void RunConfig::validate() const {
  if (version != kVersion)
    throw std::invalid_argument("config: unsupported version " +
                                std::to_string(version));
  if (env_name != "point_mass" && env_name != "gait_walker")
    throw std::invalid_argument("config: env.name must be point_mass or "
                                "gait_walker (got '" + env_name + "')");
  env.validate();
  policy.validate();
  ppo.validate();
  // feature_dim 0 here means "infer from the env schema"; the loop fills it
  // before the predictor ever sees it, so validate the rest as if filled.
  pref::PredictorConfig p = predictor;
  if (p.feature_dim == 0) p.feature_dim = 1;
  p.validate();
  trainer.validate();
  loop.validate();
  annotator.validate();
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::unordered_set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      parse_fail(origin, lineno, "expected 'key = value', got '" + t + "'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) parse_fail(origin, lineno, "missing key before '='");

    const auto& lookup = key_lookup();
    const auto it = lookup.find(key);
    if (it == lookup.end())
      parse_fail(origin, lineno, "unknown key '" + key + "'");
    if (!seen.insert(key).second)
      parse_fail(origin, lineno, "duplicate key '" + key + "'");
    try {
      it->second->set(cfg, value);
    } catch (const std::invalid_argument& e) {
      parse_fail(origin, lineno,
                 "bad value for '" + key + "': " + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(origin + ": " + e.what());
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open '" + path + "'");
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_config(buf.str(), path);
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out = "# preference-driven RL run configuration\n";
  std::string section;
  for (const KeyDef& d : key_defs()) {
    const auto dot = d.key.find('.');
    const std::string sec = dot == std::string::npos ? "" : d.key.substr(0, dot);
    if (sec != section && !sec.empty()) {
      out += "\n# [" + sec + "]\n";
      section = sec;
    }
    out += d.key + " = " + d.get(cfg) + "\n";
  }
  return out;
}

}  // namespace lapp::io
