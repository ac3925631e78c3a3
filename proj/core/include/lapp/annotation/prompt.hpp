#pragma once

#include <span>
#include <string>
#include <vector>

#include "lapp/annotation/annotator.hpp"

namespace lapp::annot {

struct ChannelDoc {
  std::string name, units, meaning;
};

// Prompt skeleton: role text, documented channels, criteria, and the reply
// instruction. Stored as plain text with @-prefixed sections; output_rules
// may use the {count} placeholder for the expected list length.
struct PromptTemplate {
  std::string preamble;
  std::vector<ChannelDoc> channels;
  std::vector<std::string> criteria;
  std::string output_rules;
  std::size_t precision = 3;  // >= 1 so data rows never look like label lists

  // Every documented channel must exist in the segment.
  void check_schema(const pref::TrajectorySegment& s) const;
};

// @preamble / @output start text blocks; @channel name | units | meaning and
// @criterion text are single lines; @precision n. Errors carry line numbers.
PromptTemplate parse_template(const std::string& text);
PromptTemplate load_template(const std::string& path);
std::string template_to_text(const PromptTemplate& t);

struct RenderedPrompt {
  std::string system;  // preamble + channel docs + criteria
  std::string user;    // numbered pair blocks + reply instruction

  std::string full() const { return system + "\n\n" + user; }
};

// Deterministic text for one batch: values at the template's precision, two
// trajectory blocks per pair, reply instruction sized to the batch.
RenderedPrompt render_prompt(const PromptTemplate& t,
                             std::span<const SegmentPair> batch);

// Built-in templates matching the two environments' channel schemas.
PromptTemplate gait_walker_template();
PromptTemplate point_mass_template();

}  // namespace lapp::annot
