#include "lapp/annotation/llm.hpp"

#include <cstdlib>

#include "httplib.h"
#include "json.hpp"

namespace lapp::annot {

LlmAnnotator::LlmAnnotator(AnnotatorConfig cfg, PromptTemplate tpl, PostFn post,
                           LogFn log)
    : cfg_(std::move(cfg)), tpl_(std::move(tpl)), post_(std::move(post)),
      log_(std::move(log)) {
  cfg_.validate();
  if (!post_) throw std::invalid_argument("LlmAnnotator: null transport");
}

std::vector<RawLabel> LlmAnnotator::annotate(
    std::span<const SegmentPair> batch) {
  if (batch.empty()) return {};
  const RenderedPrompt prompt = render_prompt(tpl_, batch);
  const std::size_t attempts = cfg_.llm.max_retries + 1;

  std::vector<std::vector<RawLabel>> samples;
  samples.reserve(cfg_.samples_per_pair);
  for (std::size_t s = 0; s < cfg_.samples_per_pair; ++s) {
    std::vector<RawLabel> labels;
    bool parsed = false;
    for (std::size_t attempt = 0; attempt < attempts && !parsed; ++attempt) {
      std::string reply;
      try {
        reply = post_(prompt.system, prompt.user, cfg_.llm.temperature);
      } catch (const transport_error& e) {
        if (attempt + 1 == attempts) throw;
        if (log_) log_(std::string("annotator transport retry: ") + e.what());
        continue;
      }
      try {
        labels = parse_label_list(reply, batch.size());
        parsed = true;
      } catch (const parse_error& e) {
        if (log_) log_(std::string("annotator parse retry: ") + e.what());
      }
    }
    if (!parsed) {
      labels.assign(batch.size(), 2);
      ++degraded_;
      if (log_)
        log_("annotator sample degraded to label 2 after " +
             std::to_string(attempts) + " unparseable replies");
    }
    samples.push_back(std::move(labels));
  }

  std::vector<RawLabel> out(batch.size());
  std::vector<RawLabel> per_pair(samples.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t s = 0; s < samples.size(); ++s) per_pair[s] = samples[s][i];
    out[i] = aggregate_mode(per_pair);
  }
  return out;
}

LlmAnnotator::PostFn http_post_transport(const LlmSettings& settings) {
  // Split "scheme://host:port/path" into client base and request path.
  const std::string& url = settings.base_url;
  std::size_t scheme = url.find("://");
  if (scheme == std::string::npos)
    throw std::invalid_argument("annotator base_url needs a scheme: " + url);
  std::size_t slash = url.find('/', scheme + 3);
  const std::string base = slash == std::string::npos ? url : url.substr(0, slash);
  const std::string path = slash == std::string::npos ? "/" : url.substr(slash);

  std::string api_key;
  if (const char* key = std::getenv("ANNOTATOR_API_KEY")) api_key = key;

  LlmSettings cfg = settings;
  return [base, path, api_key, cfg](const std::string& system,
                                    const std::string& user,
                                    double temperature) -> std::string {
    httplib::Client client(base);
    const auto timeout_ms =
        std::chrono::milliseconds(static_cast<long long>(cfg.timeout_s * 1000));
    client.set_connection_timeout(timeout_ms);
    client.set_read_timeout(timeout_ms);
    client.set_write_timeout(timeout_ms);
    httplib::Headers headers;
    if (!api_key.empty())
      headers.emplace("Authorization", "Bearer " + api_key);

    nlohmann::json body;
    body["system"] = system;
    body["user"] = user;
    body["temperature"] = temperature;
    if (!cfg.model.empty()) body["model"] = cfg.model;

    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res)
      throw transport_error("POST " + base + path + " failed: " +
                            httplib::to_string(res.error()));
    if (res->status != 200)
      throw transport_error("POST " + base + path + " returned HTTP " +
                            std::to_string(res->status));
    try {
      nlohmann::json reply = nlohmann::json::parse(res->body);
      return reply.at("text").get<std::string>();
    } catch (const std::exception& e) {
      throw transport_error(std::string("annotator reply envelope invalid: ") +
                            e.what());
    }
  };
}

}  // namespace lapp::annot
