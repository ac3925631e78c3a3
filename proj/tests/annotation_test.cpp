#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "lapp/annotation/llm.hpp"
#include "lapp/annotation/oracle.hpp"
#include "lapp/annotation/replay.hpp"
#include "lapp/numerics/rng.hpp"

using lapp::num::DenseArray;
using lapp::num::RandomStream;
using lapp::pref::TrajectorySegment;
using namespace lapp::annot;

namespace {

TrajectorySegment tracking_segment(std::vector<double> velocity,
                                   double command) {
  TrajectorySegment s;
  const std::size_t n = velocity.size();
  DenseArray v({n, 1}, std::move(velocity));
  s.channels["velocity"] = std::move(v);
  s.channels["commands"] = DenseArray::full({n, 1}, command);
  return s;
}

// Per-foot contact pattern with `onsets` lift-offs over `steps` steps,
// identical across feet; cadence = onsets / (steps * dt).
TrajectorySegment cadence_segment(std::size_t steps, std::size_t onsets) {
  TrajectorySegment s;
  DenseArray c({steps, 4});
  const std::size_t period = steps / onsets;
  for (std::size_t t = 0; t < steps; ++t) {
    const double on = (t % period) < (period + 1) / 2 ? 0.0 : 1.0;
    for (std::size_t f = 0; f < 4; ++f) c.at(t, f) = on;
  }
  s.channels["feet_contacts"] = std::move(c);
  return s;
}

SegmentPair walker_pair(std::uint64_t seed, std::size_t steps = 8) {
  RandomStream rng(seed);
  SegmentPair p;
  for (TrajectorySegment* s : {&p.a, &p.b}) {
    DenseArray vel({steps, 2}), pose({steps, 4}), cmd({steps, 1}),
        contacts({steps, 4});
    for (std::size_t i = 0; i < vel.size(); ++i) vel[i] = rng.uniform(0.0, 2.0);
    for (std::size_t i = 0; i < pose.size(); ++i) pose[i] = rng.gaussian();
    const double c = rng.uniform(0.5, 2.0);
    for (std::size_t t = 0; t < steps; ++t) cmd.at(t, 0) = c;
    for (std::size_t i = 0; i < contacts.size(); ++i)
      contacts[i] = rng.unit() < 0.5 ? 0.0 : 1.0;
    s->channels["base_lin_vel"] = vel;
    s->channels["base_pose"] = pose;
    s->channels["commands"] = cmd;
    s->channels["feet_contacts"] = contacts;
    s->episode = static_cast<std::int64_t>(seed);
  }
  p.b.episode += 1000;
  return p;
}

class ScriptedAnnotator : public Annotator {
 public:
  explicit ScriptedAnnotator(std::vector<RawLabel> script)
      : script_(std::move(script)) {}

  std::vector<RawLabel> annotate(std::span<const SegmentPair> batch) override {
    batch_sizes.push_back(batch.size());
    std::vector<RawLabel> out;
    for (std::size_t i = 0; i < batch.size(); ++i)
      out.push_back(script_[(cursor_ + i) % script_.size()]);
    cursor_ += batch.size();
    return out;
  }

  std::vector<std::size_t> batch_sizes;

 private:
  std::vector<RawLabel> script_;
  std::size_t cursor_ = 0;
};

}  // namespace

TEST_CASE("label list parsing accepts the canonical reply") {
  CHECK(parse_label_list("[0, 0, 1, 2, 3]", 5) ==
        std::vector<RawLabel>{0, 0, 1, 2, 3});
  CHECK(parse_label_list("Here you go: [1,0,2]\nHope that helps!", 3) ==
        std::vector<RawLabel>{1, 0, 2});
  CHECK(parse_label_list("[ 3 ,\n2 ]", 2) == std::vector<RawLabel>{3, 2});
}

TEST_CASE("label list parsing rejects wrong shape or range") {
  CHECK_THROWS_AS(parse_label_list("Sure! [1,0]", 5), parse_error);
  CHECK_THROWS_AS(parse_label_list("[0, 4, 1, 2, 3]", 5), parse_error);
  CHECK_THROWS_AS(parse_label_list("[-1, 0]", 2), parse_error);
  CHECK_THROWS_AS(parse_label_list("no list here", 5), parse_error);
  CHECK_THROWS_AS(parse_label_list("[]", 5), parse_error);
}

TEST_CASE("label list parsing skips bracketed non-lists") {
  CHECK(parse_label_list("I checked [see above], answer [0,1]", 2) ==
        std::vector<RawLabel>{0, 1});
  CHECK(parse_label_list("scores [0.swap5, 1.5] so [2, 2]", 2) ==
        std::vector<RawLabel>{2, 2});
  // Decimal matrices (as rendered in prompts) never count as label lists.
  CHECK_THROWS_AS(parse_label_list("[[0.500], [1.000]]", 1), parse_error);
}

TEST_CASE("mode aggregation follows majority with ties to 2") {
  std::vector<RawLabel> nine_six(9, 0);
  nine_six.insert(nine_six.end(), 6, 1);
  CHECK(aggregate_mode(nine_six) == 0);

  std::vector<RawLabel> tie(7, 0);
  tie.insert(tie.end(), 7, 1);
  tie.push_back(2);
  CHECK(aggregate_mode(tie) == 2);

  CHECK(aggregate_mode(std::vector<RawLabel>(15, 3)) == 3);
  CHECK(aggregate_mode(std::vector<RawLabel>{1}) == 1);
  CHECK(aggregate_mode(std::vector<RawLabel>{2, 3}) == 2);
  CHECK_THROWS_AS(aggregate_mode({}), std::invalid_argument);

  // Order invariance.
  RandomStream rng(8);
  std::vector<RawLabel> mixed{0, 0, 0, 1, 1, 2, 3, 3, 3, 3, 1, 0, 2, 0, 0};
  const RawLabel want = aggregate_mode(mixed);
  for (int trial = 0; trial < 30; ++trial) {
    rng.shuffle(mixed);
    CHECK(aggregate_mode(mixed) == want);
  }
}

TEST_CASE("label mapping keeps 0/1/2 and discards 3") {
  CHECK(map_label(0) == 0.0);
  CHECK(map_label(1) == 1.0);
  CHECK(map_label(2) == 0.5);
  CHECK_FALSE(map_label(3).has_value());
  CHECK_THROWS_AS(map_label(4), std::invalid_argument);
  CHECK_THROWS_AS(map_label(-1), std::invalid_argument);
}

TEST_CASE("prompt template text round-trips through its parser") {
  const PromptTemplate t = gait_walker_template();
  const PromptTemplate back = parse_template(template_to_text(t));
  CHECK(back.preamble == t.preamble);
  CHECK(back.output_rules == t.output_rules);
  CHECK(back.precision == t.precision);
  REQUIRE(back.channels.size() == t.channels.size());
  for (std::size_t i = 0; i < t.channels.size(); ++i) {
    CHECK(back.channels[i].name == t.channels[i].name);
    CHECK(back.channels[i].units == t.channels[i].units);
    CHECK(back.channels[i].meaning == t.channels[i].meaning);
  }
  CHECK(back.criteria == t.criteria);
}

TEST_CASE("prompt template parse errors carry line numbers") {
  CHECK_THROWS_WITH_AS(parse_template("@preamble\nhi\n@bogus x\n"),
                       "prompt template line 3: unknown directive '@bogus'",
                       std::invalid_argument);
  CHECK_THROWS_AS(parse_template("stray text\n@preamble\nhi\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_template("@preamble\nhi\n@channel name only\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      parse_template("@preamble\nhi\n@channel a | b | c\n@precision 0\n"),
      std::invalid_argument);
  // Missing text blocks.
  CHECK_THROWS_AS(parse_template("@channel a | b | c\n@output\nreply\n"),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_template("@preamble\nhi\n@channel a | b | c\n"),
                  std::invalid_argument);
}

TEST_CASE("prompt rendering is deterministic with fixed precision") {
  std::vector<SegmentPair> batch;
  for (std::uint64_t i = 0; i < 5; ++i) batch.push_back(walker_pair(i));
  batch[0].a.channels["base_lin_vel"].at(0, 0) = 1.23456;

  const PromptTemplate t = gait_walker_template();
  RenderedPrompt r1 = render_prompt(t, batch);
  RenderedPrompt r2 = render_prompt(t, batch);
  CHECK(r1.system == r2.system);
  CHECK(r1.user == r2.user);

  // Exactly two trajectory blocks per pair (the reply instruction also
  // mentions trajectories, so count the block headers).
  std::size_t blocks = 0;
  for (std::size_t pos = r1.user.find("Trajectory A:");
       pos != std::string::npos; pos = r1.user.find("Trajectory A:", pos + 1))
    ++blocks;
  for (std::size_t pos = r1.user.find("Trajectory B:");
       pos != std::string::npos; pos = r1.user.find("Trajectory B:", pos + 1))
    ++blocks;
  CHECK(blocks == 10);

  CHECK(r1.user.find("1.235") != std::string::npos);   // rounded, 3 decimals
  CHECK(r1.user.find("1.23456") == std::string::npos);
  CHECK(r1.user.find("list of 5 preference values") != std::string::npos);
  CHECK(r1.system.find("quadruped") != std::string::npos);

  // The embedded example is the only integer list in the whole prompt.
  CHECK(parse_label_list(r1.full(), 5) == std::vector<RawLabel>{0, 0, 1, 2, 3});

  // Smaller batch: the {count} placeholder follows the batch size.
  RenderedPrompt r3 = render_prompt(t, std::span(batch).subspan(0, 3));
  CHECK(r3.user.find("list of 3 preference values") != std::string::npos);

  batch[2].b.channels.erase("base_pose");
  CHECK_THROWS_WITH_AS(
      render_prompt(t, batch),
      "segment missing channel 'base_pose' documented in the prompt template",
      std::invalid_argument);
}

TEST_CASE("oracle prefers the higher weighted score") {
  // Cadence 4.0 vs 2.0 at weight +1: first segment wins.
  SegmentPair p;
  p.a = cadence_segment(20, 4);  // 16 onsets / 4 s of foot-time = 4.0
  p.b = cadence_segment(20, 2);  // 2.0
  OracleAnnotator oracle({{0, {{"cadence", 1.0}}}}, 0.05, 0.1);
  CHECK(oracle.score(p.a) == doctest::Approx(4.0));
  CHECK(oracle.score(p.b) == doctest::Approx(2.0));
  CHECK(oracle.annotate(std::vector<SegmentPair>{p}) ==
        std::vector<RawLabel>{0});

  // Swapping the pair flips the verdict.
  SegmentPair swapped{p.b, p.a};
  CHECK(oracle.annotate(std::vector<SegmentPair>{swapped}) ==
        std::vector<RawLabel>{1});

  // Identical segments tie.
  SegmentPair same{p.a, p.a};
  CHECK(oracle.annotate(std::vector<SegmentPair>{same}) ==
        std::vector<RawLabel>{2});

  // Negative weight flips the preference.
  OracleAnnotator slow({{0, {{"cadence", -1.0}}}}, 0.05, 0.1);
  CHECK(slow.annotate(std::vector<SegmentPair>{p}) ==
        std::vector<RawLabel>{1});
}

TEST_CASE("oracle is antisymmetric on random pairs") {
  OracleAnnotator oracle(
      {{0, {{"tracking_error", -1.0}, {"cadence", 0.5}, {"sync_error", -0.5}}}},
      0.05, 1e-9);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    SegmentPair p = walker_pair(seed);
    SegmentPair q{p.b, p.a};
    const RawLabel fwd = oracle.annotate(std::vector<SegmentPair>{p})[0];
    const RawLabel rev = oracle.annotate(std::vector<SegmentPair>{q})[0];
    if (fwd == 2)
      CHECK(rev == 2);
    else
      CHECK(rev == 1 - fwd);
    CHECK(fwd != 3);
  }
}

TEST_CASE("oracle criteria switch by stage") {
  std::vector<OracleStage> schedule{
      {0, {{"cadence", 1.0}}},
      {10, {{"cadence", -1.0}}},
  };
  OracleAnnotator oracle(schedule, 0.05, 0.1);
  SegmentPair p{cadence_segment(20, 4), cadence_segment(20, 2)};

  oracle.set_stage(0);
  CHECK(oracle.annotate(std::vector<SegmentPair>{p})[0] == 0);
  oracle.set_stage(9);
  CHECK(oracle.annotate(std::vector<SegmentPair>{p})[0] == 0);
  oracle.set_stage(10);
  CHECK(oracle.annotate(std::vector<SegmentPair>{p})[0] == 1);
  oracle.set_stage(500);
  CHECK(oracle.annotate(std::vector<SegmentPair>{p})[0] == 1);
  CHECK(oracle.active_criteria()[0].weight == -1.0);
}

TEST_CASE("oracle rejects bad schedules and bad features") {
  CHECK_THROWS_AS(OracleAnnotator({}, 0.05, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(OracleAnnotator({{5, {{"cadence", 1.0}}}}, 0.05, 0.1),
                  std::invalid_argument);
  CHECK_THROWS_AS(OracleAnnotator({{0, {{"swagger", 1.0}}}}, 0.05, 0.1),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      OracleAnnotator({{0, {{"cadence", 1.0}}}, {0, {{"cadence", 2.0}}}}, 0.05,
                      0.1),
      std::invalid_argument);

  // NaN feature values are an error, not a silent verdict.
  OracleAnnotator oracle({{0, {{"tracking_error", -1.0}}}}, 0.05, 0.1);
  SegmentPair p;
  p.a = tracking_segment({0.5, std::nan("")}, 1.0);
  p.b = tracking_segment({0.5, 0.6}, 1.0);
  CHECK_THROWS_AS(oracle.annotate(std::vector<SegmentPair>{p}),
                  std::runtime_error);

  // Missing channels name the gap.
  TrajectorySegment bare;
  bare.channels["velocity"] = DenseArray({4, 1});
  SegmentPair q{bare, bare};
  OracleAnnotator cad({{0, {{"cadence", 1.0}}}}, 0.05, 0.1);
  CHECK_THROWS_AS(cad.annotate(std::vector<SegmentPair>{q}),
                  std::invalid_argument);
}

TEST_CASE("annotate_pairs chunks batches and conserves pairs") {
  std::vector<SegmentPair> pairs;
  for (std::uint64_t i = 0; i < 10; ++i) pairs.push_back(walker_pair(i));

  ScriptedAnnotator backend({0, 1, 2, 3});
  AnnotationOutcome out = annotate_pairs(backend, pairs, 4);

  CHECK(backend.batch_sizes == std::vector<std::size_t>{4, 4, 2});
  CHECK(out.raw == std::vector<RawLabel>{0, 1, 2, 3, 0, 1, 2, 3, 0, 1});
  CHECK(out.triples.size() + out.discarded.size() == pairs.size());
  CHECK(out.discarded == std::vector<std::size_t>{3, 7});
  REQUIRE(out.triples.size() == 8);
  CHECK(out.triples[0].y == 0.0);
  CHECK(out.triples[1].y == 1.0);
  CHECK(out.triples[2].y == 0.5);
  // Triples keep the segments of their source pair.
  CHECK(out.triples[3].a.episode == pairs[4].a.episode);
  CHECK(out.triples[3].b.episode == pairs[4].b.episode);
}

TEST_CASE("replay annotator looks up labels by pair hash") {
  std::vector<SegmentPair> pairs;
  for (std::uint64_t i = 0; i < 6; ++i) pairs.push_back(walker_pair(100 + i));

  std::map<std::uint64_t, RawLabel> table;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    table[lapp::pref::pair_hash(pairs[i].a, pairs[i].b)] =
        static_cast<RawLabel>(i % 4);

  ReplayAnnotator replay(table);
  CHECK(replay.annotate(pairs) ==
        std::vector<RawLabel>{0, 1, 2, 3, 0, 1});

  // Order matters: the reversed pair has a different hash.
  SegmentPair rev{pairs[0].b, pairs[0].a};
  CHECK_THROWS_AS(replay.annotate(std::vector<SegmentPair>{rev}),
                  std::runtime_error);
}

TEST_CASE("replay files round-trip and reject junk") {
  const std::string path = "replay_test.jsonl";
  std::map<std::uint64_t, RawLabel> table{
      {0x0123456789abcdefULL, 2}, {0xffeeddccbbaa0099ULL, 0}, {7ULL, 3}};
  write_replay_file(path, table);
  CHECK(read_replay_file(path) == table);
  CHECK(ReplayAnnotator::from_file(path).table() == table);

  CHECK(pair_hash_hex(0x0123456789abcdefULL) == "0123456789abcdef");
  CHECK(pair_hash_hex(7) == "0000000000000007");

  {
    std::ofstream bad(path);
    bad << "{\"pair_hash\": \"0123456789abcdef\", \"label\": 9}\n";
  }
  CHECK_THROWS_AS(read_replay_file(path), std::runtime_error);
  {
    std::ofstream bad(path);
    bad << "not json\n";
  }
  try {
    read_replay_file(path);
    FAIL("expected error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find(":1:") != std::string::npos);
  }
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_replay_file(path), std::runtime_error);
}

TEST_CASE("llm annotator aggregates sampled replies") {
  std::vector<SegmentPair> batch;
  for (std::uint64_t i = 0; i < 5; ++i) batch.push_back(walker_pair(i));
  AnnotatorConfig cfg;
  cfg.backend = AnnotatorBackend::llm;
  cfg.samples_per_pair = 15;

  // Constant stub: every sample says all-zeros.
  std::size_t posts = 0;
  LlmAnnotator constant(cfg, gait_walker_template(),
                        [&](const std::string&, const std::string&, double) {
                          ++posts;
                          return "[0,0,0,0,0]";
                        });
  CHECK(constant.annotate(batch) == std::vector<RawLabel>(5, 0));
  CHECK(posts == 15);

  // Alternating stub: 8 of one reply, 7 of the other; the majority wins.
  std::size_t calls = 0;
  LlmAnnotator alternating(cfg, gait_walker_template(),
                           [&](const std::string&, const std::string&, double) {
                             return ++calls % 2 == 1 ? "[0,0,0,0,0]"
                                                     : "[1,1,1,1,1]";
                           });
  CHECK(alternating.annotate(batch) == std::vector<RawLabel>(5, 0));
  CHECK(calls == 15);

  // Even sample count, 1:1 split: the mode tie collapses to 2.
  cfg.samples_per_pair = 2;
  std::size_t k = 0;
  LlmAnnotator tied(cfg, gait_walker_template(),
                    [&](const std::string&, const std::string&, double) {
                      return ++k % 2 == 1 ? "[0,0,0,0,0]" : "[1,1,1,1,1]";
                    });
  CHECK(tied.annotate(batch) == std::vector<RawLabel>(5, 2));
}

TEST_CASE("llm annotator retries parse failures then degrades") {
  std::vector<SegmentPair> batch;
  for (std::uint64_t i = 0; i < 5; ++i) batch.push_back(walker_pair(i));
  AnnotatorConfig cfg;
  cfg.backend = AnnotatorBackend::llm;
  cfg.samples_per_pair = 3;
  cfg.llm.max_retries = 2;

  // Garbage then valid: the retry recovers every sample.
  std::size_t n = 0;
  std::vector<std::string> log;
  LlmAnnotator flaky(
      cfg, gait_walker_template(),
      [&](const std::string&, const std::string&, double) {
        return ++n % 2 == 1 ? "let me think..." : "[1,1,1,1,1]";
      },
      [&](const std::string& m) { log.push_back(m); });
  CHECK(flaky.annotate(batch) == std::vector<RawLabel>(5, 1));
  CHECK(flaky.degraded_samples() == 0);
  CHECK(log.size() == 3);  // one parse retry per sample

  // Never-valid replies: each sample degrades to 2 after the retry budget.
  std::size_t attempts = 0;
  LlmAnnotator broken(cfg, gait_walker_template(),
                      [&](const std::string&, const std::string&, double) {
                        ++attempts;
                        return "shrug";
                      });
  CHECK(broken.annotate(batch) == std::vector<RawLabel>(5, 2));
  CHECK(broken.degraded_samples() == 3);
  CHECK(attempts == 3 * 3);  // every sample exhausts 1 + max_retries tries

  // Transport failures abort the batch once retries run out.
  std::size_t tries = 0;
  LlmAnnotator dead(cfg, gait_walker_template(),
                    [&](const std::string&, const std::string&,
                        double) -> std::string {
                      ++tries;
                      throw transport_error("connection refused");
                    });
  CHECK_THROWS_AS(dead.annotate(batch), transport_error);
  CHECK(tries == 3);  // 1 + max_retries, then give up
}

TEST_CASE("llm annotator sends the rendered prompt and temperature") {
  std::vector<SegmentPair> batch{walker_pair(1), walker_pair(2)};
  AnnotatorConfig cfg;
  cfg.backend = AnnotatorBackend::llm;
  cfg.samples_per_pair = 1;
  cfg.llm.temperature = 0.7;

  std::string got_system, got_user;
  double got_temp = -1.0;
  LlmAnnotator probe(cfg, gait_walker_template(),
                     [&](const std::string& system, const std::string& user,
                         double temperature) {
                       got_system = system;
                       got_user = user;
                       got_temp = temperature;
                       return "[2,2]";
                     });
  CHECK(probe.annotate(batch) == std::vector<RawLabel>{2, 2});
  CHECK(got_temp == 0.7);
  CHECK(got_system.find("quadruped") != std::string::npos);
  CHECK(got_user.find("Pair 2:") != std::string::npos);
  CHECK(got_user.find("list of 2 preference values") != std::string::npos);
}

TEST_CASE("http transport speaks the wire contract") {
  httplib::Server server;
  std::string seen_auth = "unset", seen_body;
  std::atomic<int> hits{0};
  server.Post("/annotate", [&](const httplib::Request& req,
                               httplib::Response& res) {
    ++hits;
    seen_auth = req.has_header("Authorization")
                    ? req.get_header_value("Authorization")
                    : "";
    seen_body = req.body;
    nlohmann::json reply;
    reply["text"] = "I looked carefully. [0, 1, 2, 0, 1]";
    res.set_content(reply.dump(), "application/json");
  });
  server.Post("/broken", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content("not json at all", "application/json");
  });
  server.Post("/unhappy", [&](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
    res.set_content("{}", "application/json");
  });

  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  setenv("ANNOTATOR_API_KEY", "test-key-123", 1);
  LlmSettings settings;
  settings.base_url = "http://127.0.0.1:" + std::to_string(port) + "/annotate";
  settings.model = "labeler-v1";
  auto post = http_post_transport(settings);
  const std::string text = post("sys text", "user text", 0.3);
  CHECK(text == "I looked carefully. [0, 1, 2, 0, 1]");
  CHECK(seen_auth == "Bearer test-key-123");
  nlohmann::json sent = nlohmann::json::parse(seen_body);
  CHECK(sent.at("system") == "sys text");
  CHECK(sent.at("user") == "user text");
  CHECK(sent.at("temperature") == 0.3);
  CHECK(sent.at("model") == "labeler-v1");

  // Without the env var there is no Authorization header; without a model
  // name the field stays off the wire.
  unsetenv("ANNOTATOR_API_KEY");
  settings.model.clear();
  auto anon = http_post_transport(settings);
  anon("s", "u", 1.0);
  CHECK(seen_auth == "");
  CHECK_FALSE(nlohmann::json::parse(seen_body).contains("model"));

  // Envelope and status failures surface as transport errors.
  LlmSettings broken = settings;
  broken.base_url = "http://127.0.0.1:" + std::to_string(port) + "/broken";
  CHECK_THROWS_AS(http_post_transport(broken)("s", "u", 1.0), transport_error);
  LlmSettings unhappy = settings;
  unhappy.base_url = "http://127.0.0.1:" + std::to_string(port) + "/unhappy";
  CHECK_THROWS_AS(http_post_transport(unhappy)("s", "u", 1.0), transport_error);

  // End to end: annotator over HTTP, counting one request per sample.
  hits = 0;
  AnnotatorConfig cfg;
  cfg.backend = AnnotatorBackend::llm;
  cfg.samples_per_pair = 3;
  cfg.llm = settings;
  std::vector<SegmentPair> batch;
  for (std::uint64_t i = 0; i < 5; ++i) batch.push_back(walker_pair(i));
  LlmAnnotator annotator(cfg, gait_walker_template(),
                         http_post_transport(settings));
  CHECK(annotator.annotate(batch) == std::vector<RawLabel>{0, 1, 2, 0, 1});
  CHECK(hits == 3);

  server.stop();
  server_thread.join();

  // Dead endpoint: connection failures are transport errors too.
  CHECK_THROWS_AS(post("s", "u", 1.0), transport_error);
}

TEST_CASE("annotator config validation") {
  AnnotatorConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.samples_per_pair = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = AnnotatorConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = AnnotatorConfig{};
  cfg.tie_tolerance = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = AnnotatorConfig{};
  cfg.llm.temperature = -0.1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
