#pragma once

#include <functional>

#include "lapp/annotation/prompt.hpp"

namespace lapp::annot {

// Endpoint failure (connection, HTTP status, malformed envelope) as opposed
// to a reply that merely fails label parsing.
class transport_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Samples the endpoint n_s times per batch prompt and aggregates per-pair
// modes. A sample whose replies never parse within the retry budget degrades
// to label 2 (ambiguous) instead of poisoning the mode; transport failures
// exhaust retries and then abort the batch.
class LlmAnnotator : public Annotator {
 public:
  // post(system, user, temperature) -> reply text. Injected so tests and
  // alternative transports need no HTTP stack.
  using PostFn = std::function<std::string(const std::string&,
                                           const std::string&, double)>;
  using LogFn = std::function<void(const std::string&)>;

  LlmAnnotator(AnnotatorConfig cfg, PromptTemplate tpl, PostFn post,
               LogFn log = {});

  std::vector<RawLabel> annotate(std::span<const SegmentPair> batch) override;

  std::size_t degraded_samples() const { return degraded_; }

 private:
  AnnotatorConfig cfg_;
  PromptTemplate tpl_;
  PostFn post_;
  LogFn log_;
  std::size_t degraded_ = 0;
};

// Real transport: POST {"system", "user", "temperature"} (plus "model" when
// configured) to settings.base_url, expecting {"text": reply}. Credentials
// come from the ANNOTATOR_API_KEY environment variable as a bearer header;
// the key never appears in logs or error messages.
LlmAnnotator::PostFn http_post_transport(const LlmSettings& settings);

}  // namespace lapp::annot
