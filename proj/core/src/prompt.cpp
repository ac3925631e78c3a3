#include "lapp/annotation/prompt.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lapp::annot {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(std::size_t line, const std::string& what) {
  throw std::invalid_argument("prompt template line " + std::to_string(line) +
                              ": " + what);
}

std::string format_value(double v, std::size_t precision) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", static_cast<int>(precision), v);
  return buf;
}

void append_matrix(std::string& out, const num::DenseArray& m,
                   std::size_t precision) {
  out += '[';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (r) out += ", ";
    out += '[';
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out += ", ";
      out += format_value(m.at(r, c), precision);
    }
    out += ']';
  }
  out += ']';
}

void append_trajectory(std::string& out, const PromptTemplate& t,
                       const pref::TrajectorySegment& s, const char* tag) {
  out += tag;
  out += ":\n";
  for (const auto& doc : t.channels) {
    out += "  ";
    out += doc.name;
    out += ": ";
    append_matrix(out, s.channels.at(doc.name), t.precision);
    out += '\n';
  }
}

}  // namespace

void PromptTemplate::check_schema(const pref::TrajectorySegment& s) const {
  for (const auto& doc : channels)
    if (!s.channels.count(doc.name))
      throw std::invalid_argument("segment missing channel '" + doc.name +
                                  "' documented in the prompt template");
}

PromptTemplate parse_template(const std::string& text) {
  PromptTemplate t;
  t.precision = 3;
  enum class Block { none, preamble, output };
  Block block = Block::none;
  bool saw_preamble = false, saw_output = false;

  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && line[0] == '@') {
      std::string head = line.substr(0, line.find(' '));
      std::string rest = trim(line.size() > head.size() ? line.substr(head.size()) : "");
      if (head == "@preamble") {
        if (saw_preamble) fail(lineno, "duplicate @preamble");
        saw_preamble = true;
        block = Block::preamble;
      } else if (head == "@output") {
        if (saw_output) fail(lineno, "duplicate @output");
        saw_output = true;
        block = Block::output;
      } else if (head == "@channel") {
        block = Block::none;
        std::size_t p1 = rest.find('|');
        std::size_t p2 = p1 == std::string::npos ? p1 : rest.find('|', p1 + 1);
        if (p2 == std::string::npos)
          fail(lineno, "@channel needs 'name | units | meaning'");
        ChannelDoc doc{trim(rest.substr(0, p1)),
                       trim(rest.substr(p1 + 1, p2 - p1 - 1)),
                       trim(rest.substr(p2 + 1))};
        if (doc.name.empty()) fail(lineno, "@channel with empty name");
        t.channels.push_back(std::move(doc));
      } else if (head == "@criterion") {
        block = Block::none;
        if (rest.empty()) fail(lineno, "@criterion with empty text");
        t.criteria.push_back(rest);
      } else if (head == "@precision") {
        block = Block::none;
        std::size_t pos = 0;
        unsigned long v = 0;
        try {
          v = std::stoul(rest, &pos);
        } catch (const std::exception&) {
          fail(lineno, "@precision needs an integer");
        }
        if (pos != rest.size() || v < 1 || v > 17)
          fail(lineno, "@precision must be an integer in 1..17");
        t.precision = v;
      } else {
        fail(lineno, "unknown directive '" + head + "'");
      }
      continue;
    }
    switch (block) {
      case Block::preamble:
        t.preamble += line;
        t.preamble += '\n';
        break;
      case Block::output:
        t.output_rules += line;
        t.output_rules += '\n';
        break;
      case Block::none:
        if (!trim(line).empty()) fail(lineno, "text outside any section");
        break;
    }
  }
  t.preamble = trim(t.preamble);
  t.output_rules = trim(t.output_rules);
  if (t.preamble.empty())
    throw std::invalid_argument("prompt template: missing @preamble text");
  if (t.output_rules.empty())
    throw std::invalid_argument("prompt template: missing @output text");
  if (t.channels.empty())
    throw std::invalid_argument("prompt template: no @channel entries");
  return t;
}

PromptTemplate load_template(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open prompt template: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_template(buf.str());
}

std::string template_to_text(const PromptTemplate& t) {
  std::string out = "@preamble\n" + t.preamble + "\n\n";
  for (const auto& doc : t.channels)
    out += "@channel " + doc.name + " | " + doc.units + " | " + doc.meaning + "\n";
  out += '\n';
  for (const auto& c : t.criteria) out += "@criterion " + c + "\n";
  if (!t.criteria.empty()) out += '\n';
  out += "@output\n" + t.output_rules + "\n\n";
  out += "@precision " + std::to_string(t.precision) + "\n";
  return out;
}

RenderedPrompt render_prompt(const PromptTemplate& t,
                             std::span<const SegmentPair> batch) {
  if (batch.empty())
    throw std::invalid_argument("render_prompt: empty batch");
  for (const auto& p : batch) {
    t.check_schema(p.a);
    t.check_schema(p.b);
  }

  RenderedPrompt r;
  r.system = t.preamble + "\n\nChannels:\n";
  for (const auto& doc : t.channels)
    r.system += "- " + doc.name + " (" + doc.units + "): " + doc.meaning + "\n";
  if (!t.criteria.empty()) {
    r.system += "\nEvaluation criteria:\n";
    for (std::size_t i = 0; i < t.criteria.size(); ++i)
      r.system += std::to_string(i + 1) + ". " + t.criteria[i] + "\n";
  }
  while (!r.system.empty() && r.system.back() == '\n') r.system.pop_back();

  for (std::size_t i = 0; i < batch.size(); ++i) {
    r.user += "Pair " + std::to_string(i + 1) + ":\n";
    append_trajectory(r.user, t, batch[i].a, "Trajectory A");
    append_trajectory(r.user, t, batch[i].b, "Trajectory B");
    r.user += '\n';
  }
  std::string rules = t.output_rules;
  const std::string key = "{count}";
  const std::string count = std::to_string(batch.size());
  for (std::size_t pos = rules.find(key); pos != std::string::npos;
       pos = rules.find(key, pos + count.size()))
    rules.replace(pos, key.size(), count);
  r.user += rules;
  return r;
}

PromptTemplate gait_walker_template() {
  PromptTemplate t;
  t.preamble =
      "You are an expert evaluator of quadruped locomotion. Each query shows "
      "pairs of short trajectory snippets recorded from a walking robot; every "
      "snippet lists the robot's per-step sensor channels over the segment. "
      "Judge which trajectory in each pair better satisfies the evaluation "
      "criteria.";
  t.channels = {
      {"base_lin_vel", "m/s", "forward and lateral base velocity per step"},
      {"base_pose", "m, rad", "base height, roll, pitch, yaw per step"},
      {"commands", "m/s", "commanded forward velocity"},
      {"feet_contacts", "bool",
       "ground contact per foot, ordered FL, FR, RL, RR"},
  };
  t.criteria = {
      "The robot should track the commanded forward velocity closely.",
      "Front feet should touch the ground together, and so should rear feet.",
      "A brisk, regular stepping rhythm is better than dragging feet.",
  };
  t.output_rules =
      "For each pair answer with one integer: 0 if Trajectory A is better, 1 "
      "if Trajectory B is better, 2 if they are equally preferable, 3 if they "
      "are incomparable. Reply with only one list of {count} preference "
      "values, e.g., [0, 0, 1, 2, 3].";
  t.precision = 3;
  return t;
}

PromptTemplate point_mass_template() {
  PromptTemplate t;
  t.preamble =
      "You are evaluating a point mass that should match a commanded speed. "
      "Each query shows pairs of short trajectory snippets; every snippet "
      "lists per-step channels. Judge which trajectory in each pair better "
      "satisfies the evaluation criteria.";
  t.channels = {
      {"commands", "m/s", "commanded velocity"},
      {"velocity", "m/s", "actual velocity per step"},
  };
  t.criteria = {
      "The velocity should stay as close to the command as possible.",
  };
  t.output_rules =
      "For each pair answer with one integer: 0 if Trajectory A is better, 1 "
      "if Trajectory B is better, 2 if they are equally preferable, 3 if they "
      "are incomparable. Reply with only one list of {count} preference "
      "values, e.g., [0, 0, 1, 2, 3].";
  t.precision = 3;
  return t;
}

}  // namespace lapp::annot
