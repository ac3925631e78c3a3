#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "lapp/annotation/oracle.hpp"
#include "lapp/annotation/replay.hpp"
#include "lapp/envs/point_mass.hpp"
#include "lapp/io/archive.hpp"
#include "lapp/io/checkpoint.hpp"
#include "lapp/io/config.hpp"
#include "lapp/io/metrics_log.hpp"
#include "lapp/io/run.hpp"
#include "lapp/loop/loop.hpp"

using namespace lapp;
using lapp::num::DenseArray;
using lapp::num::RandomStream;
using lapp::num::derive_seed;

namespace {

namespace fs = std::filesystem;

bool same_bits(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

void check_same_vec(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  std::size_t diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += !same_bits(a[i], b[i]);
  CHECK(diff == 0);
}

template <typename Fn>
std::string thrown_message(Fn fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

struct TempDir {
  fs::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() /
           ("lapp_io_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(bool(f));
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
}

// Independent reference implementations for the container format: little
// endian readers and the FNV-1a constants straight from its definition.
std::uint64_t fnv_ref(const unsigned char* p, std::size_t n) {
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t rd64(const std::vector<unsigned char>& b, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b.at(at + i)) << (8 * i);
  return v;
}

std::uint32_t rd32(const std::vector<unsigned char>& b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b.at(at + i)) << (8 * i);
  return v;
}

// --- tiny run shapes shared with the loop tests ---

rl::PolicyConfig tiny_policy() {
  rl::PolicyConfig c;
  c.hidden = {8};
  return c;
}

pref::PredictorConfig tiny_predictor() {
  pref::PredictorConfig pc;
  pc.mode = pref::PredictorMode::markovian;
  pc.context_length = 1;
  pc.mlp_variant = true;
  pc.mlp_hidden = {8};
  pc.feature_dim = 0;
  return pc;
}

trainer::TrainerConfig tiny_trainer() {
  trainer::TrainerConfig tc;
  tc.pool_size = 2;
  tc.ensemble_size = 1;
  tc.min_epochs = 1;
  tc.max_epochs = 2;
  tc.batch_size = 4;
  tc.lr = 1e-3;
  return tc;
}

rl::PPOConfig tiny_ppo() {
  rl::PPOConfig c;
  c.update_epochs = 2;
  c.minibatches = 2;
  return c;
}

std::vector<annot::OracleStage> tracking_schedule() {
  return {{0, {{"tracking_error", -1.0}}}};
}

// The walker run the checkpoint tests save and resume; mirrors the in-memory
// snapshot contract test in the loop suite, but through the disk format.
io::RunConfig walker_run_config() {
  io::RunConfig c;
  c.env_name = "gait_walker";
  c.env.episode_len = 5;
  c.policy = tiny_policy();
  c.ppo = tiny_ppo();
  c.predictor = tiny_predictor();
  c.trainer = tiny_trainer();
  c.loop.total_epochs = 6;
  c.loop.update_interval = 2;
  c.loop.pairs_per_epoch = 2;
  c.loop.rollouts = 2;
  c.loop.steps = 12;
  c.loop.dataset_size = 4;
  c.loop.segment_len = 4;
  c.loop.standardize_rp = true;
  c.loop.beta = 0.5;
  c.loop.seed = 13;
  c.annotator.schedule = tracking_schedule();
  c.annotator.tie_tolerance = 1e-12;
  return c;
}

io::RunConfig pm_baseline_config() {
  io::RunConfig c;
  c.env_name = "point_mass";
  c.env.episode_len = 6;
  c.policy = tiny_policy();
  c.ppo = tiny_ppo();
  c.predictor = tiny_predictor();
  c.trainer = tiny_trainer();
  c.loop.total_epochs = 4;
  c.loop.pairs_per_epoch = 0;
  c.loop.rollouts = 2;
  c.loop.steps = 8;
  c.loop.dataset_size = 0;
  c.loop.segment_len = 4;
  c.loop.beta = 0.0;
  c.loop.seed = 21;
  return c;
}

std::vector<double> param_values(const rl::PolicyBundle& p) {
  std::vector<double> out;
  for (const num::Parameter* q : p.params())
    out.insert(out.end(), q->value.data(), q->value.data() + q->value.size());
  return out;
}

void check_rows_equal(const loop::MetricsRow& a, const loop::MetricsRow& b) {
  CHECK(a.epoch == b.epoch);
  CHECK(same_bits(a.mean_reward_env, b.mean_reward_env));
  CHECK(same_bits(a.mean_reward_pref, b.mean_reward_pref));
  CHECK(same_bits(a.tracking_error, b.tracking_error));
  CHECK(same_bits(a.sync_error, b.sync_error));
  CHECK(same_bits(a.cadence, b.cadence));
  CHECK(same_bits(a.mean_velocity, b.mean_velocity));
  CHECK(same_bits(a.ppo.policy_loss, b.ppo.policy_loss));
  CHECK(same_bits(a.ppo.value_loss, b.ppo.value_loss));
  CHECK(same_bits(a.ppo.entropy, b.ppo.entropy));
  CHECK(same_bits(a.ppo.approx_kl, b.ppo.approx_kl));
  CHECK(same_bits(a.ppo.clip_fraction, b.ppo.clip_fraction));
  CHECK(a.predictor_updated == b.predictor_updated);
  CHECK(a.annotation_failed == b.annotation_failed);
  CHECK(same_bits(a.predictor_val_loss, b.predictor_val_loss));
  CHECK(a.labels == b.labels);
  CHECK(a.labeled == b.labeled);
  CHECK(a.discarded == b.discarded);
  CHECK(a.dataset_size == b.dataset_size);
  CHECK(a.buffer_size == b.buffer_size);
}

// Deep bitwise equality over every piece of state the checkpoint carries.
void check_loops_equal(const loop::LappLoop& x, const loop::LappLoop& y) {
  check_same_vec(param_values(x.policy()), param_values(y.policy()));
  const num::AdamState& ox = x.policy().optimizer();
  const num::AdamState& oy = y.policy().optimizer();
  CHECK(ox.step_count() == oy.step_count());
  REQUIRE(ox.first_moments().size() == oy.first_moments().size());
  for (std::size_t i = 0; i < ox.first_moments().size(); ++i) {
    check_same_vec(ox.first_moments()[i].values(), oy.first_moments()[i].values());
    check_same_vec(ox.second_moments()[i].values(), oy.second_moments()[i].values());
  }
  check_same_vec(x.policy().normalizer().mean().values(),
                 y.policy().normalizer().mean().values());
  check_same_vec(x.policy().normalizer().m2().values(),
                 y.policy().normalizer().m2().values());
  CHECK(same_bits(x.policy().normalizer().count(), y.policy().normalizer().count()));

  REQUIRE(x.ensemble().members.size() == y.ensemble().members.size());
  check_same_vec(x.ensemble().val_losses, y.ensemble().val_losses);
  for (std::size_t i = 0; i < x.ensemble().members.size(); ++i) {
    const auto px = x.ensemble().members[i].params();
    const auto py = y.ensemble().members[i].params();
    REQUIRE(px.size() == py.size());
    for (std::size_t j = 0; j < px.size(); ++j)
      check_same_vec(px[j]->value.values(), py[j]->value.values());
    check_same_vec(x.ensemble().members[i].norm().mean.values(),
                   y.ensemble().members[i].norm().mean.values());
    check_same_vec(x.ensemble().members[i].norm().std.values(),
                   y.ensemble().members[i].norm().std.values());
  }

  REQUIRE(x.venv().size() == y.venv().size());
  check_same_vec(x.venv().pending_obs().values(), y.venv().pending_obs().values());
  CHECK(x.venv().episode_uids() == y.venv().episode_uids());
  CHECK(x.venv().episode_steps() == y.venv().episode_steps());
  CHECK(x.venv().next_uid() == y.venv().next_uid());
  for (std::size_t i = 0; i < x.venv().size(); ++i) {
    check_same_vec(x.venv().env(i).sim_state(), y.venv().env(i).sim_state());
    CHECK(x.venv().env(i).rng_state() == y.venv().env(i).rng_state());
  }

  REQUIRE(x.windows().n_envs() == y.windows().n_envs());
  for (std::size_t i = 0; i < x.windows().n_envs(); ++i)
    check_same_vec(x.windows().raw(i), y.windows().raw(i));

  const auto bx = x.buffer().contents();
  const auto by = y.buffer().contents();
  REQUIRE(bx.size() == by.size());
  for (std::size_t i = 0; i < bx.size(); ++i) {
    CHECK(pref::segment_to_json(bx[i].a) == pref::segment_to_json(by[i].a));
    CHECK(pref::segment_to_json(bx[i].b) == pref::segment_to_json(by[i].b));
  }
  REQUIRE(x.dataset().size() == y.dataset().size());
  for (std::size_t i = 0; i < x.dataset().size(); ++i)
    CHECK(pref::triple_to_json(x.dataset().items()[i]) ==
          pref::triple_to_json(y.dataset().items()[i]));

  check_same_vec(x.rp_norm().mean().values(), y.rp_norm().mean().values());
  check_same_vec(x.rp_norm().m2().values(), y.rp_norm().m2().values());
  CHECK(same_bits(x.rp_norm().count(), y.rp_norm().count()));

  CHECK(x.action_rng().save_state() == y.action_rng().save_state());
  CHECK(x.ppo_rng().save_state() == y.ppo_rng().save_state());
  CHECK(x.pair_rng().save_state() == y.pair_rng().save_state());
  CHECK(x.resample_rng().save_state() == y.resample_rng().save_state());
  CHECK(x.epoch() == y.epoch());
  CHECK(x.cycles() == y.cycles());
}

// Pairs of short point-mass segments for the annotation file tests.
std::vector<annot::SegmentPair> some_pairs(std::size_t k, std::uint64_t seed) {
  std::vector<std::unique_ptr<envs::Env>> es;
  for (int i = 0; i < 2; ++i) {
    envs::EnvConfig c;
    c.episode_len = 5;
    es.push_back(std::make_unique<envs::PointMassEnv>(c));
  }
  rl::VecEnv venv(std::move(es), seed);
  rl::PolicyBundle pol(venv.obs_dim(), venv.action_dim(), tiny_policy(),
                       derive_seed(seed, "policy"));
  RandomStream arng(derive_seed(seed, "actions"));
  rl::RolloutBuffer buf =
      rl::collect_rollout(pol, venv, nullptr, nullptr, 12, 0.0, arng);
  RandomStream prng(derive_seed(seed, "pairs"));
  return loop::sample_pairs(buf, k, 4, prng);
}

}  // namespace

TEST_CASE("archive bytes follow the documented layout exactly") {
  TempDir tmp;
  io::Archive a;
  a.add("alpha", {1.5, -0.25});
  a.add_string("name", "hi");
  const std::string path = tmp.file("layout.ckpt");
  io::write_archive(path, a);

  const auto b = slurp(path);
  // header: magic(8) version(4) bom(4) count(8)
  // entry alpha: 8 + 5 + 8 + 16 + 8 = 45
  // entry name:  8 + 4 + 8 + 16 + 8 = 44  (string "hi" -> 2 lanes)
  // file hash: 8
  REQUIRE(b.size() == 24 + 45 + 44 + 8);
  CHECK(std::memcmp(b.data(), "LAPPCKPT", 8) == 0);
  CHECK(rd32(b, 8) == 1);
  CHECK(rd32(b, 12) == 0x01020304u);
  CHECK(rd64(b, 16) == 2);

  std::size_t p = 24;
  CHECK(rd64(b, p) == 5);  // "alpha"
  CHECK(std::memcmp(b.data() + p + 8, "alpha", 5) == 0);
  CHECK(rd64(b, p + 13) == 2);
  CHECK(same_bits(std::bit_cast<double>(rd64(b, p + 21)), 1.5));
  CHECK(same_bits(std::bit_cast<double>(rd64(b, p + 29)), -0.25));
  CHECK(rd64(b, p + 37) == fnv_ref(b.data() + p, 37));

  p += 45;
  CHECK(rd64(b, p) == 4);  // "name"
  CHECK(rd64(b, p + 12) == 2);
  CHECK(rd64(b, p + 20) == 2);  // lane 0: byte length of "hi"
  CHECK(b[p + 28] == 'h');
  CHECK(b[p + 29] == 'i');
  CHECK(rd64(b, p + 36) == fnv_ref(b.data() + p, 36));

  CHECK(rd64(b, b.size() - 8) == fnv_ref(b.data(), b.size() - 8));
}

TEST_CASE("archive round-trips every bit pattern") {
  TempDir tmp;
  const double quiet = std::bit_cast<double>(0x7ff8deadbeefcafeull);
  const double denorm = 5e-324;
  io::Archive a;
  a.add("weird", {quiet, -0.0, 0.0, denorm,
                  std::numeric_limits<double>::infinity(),
                  -std::numeric_limits<double>::infinity(), 1.0 / 3.0});
  a.add("empty", {});
  a.add_scalar("one", -2.5);
  a.add_u64("umax", ~0ull);
  a.add_u64("uzero", 0);
  a.add_i64s("ints", {-5, 7, std::numeric_limits<std::int64_t>::min()});
  a.add_string("empty_str", "");
  for (std::size_t n = 1; n <= 17; ++n)
    a.add_string("s" + std::to_string(n), std::string(n, 'a' + char(n % 26)));
  a.add_string("binary", std::string("\x00\xff\x01", 3));

  const std::string path = tmp.file("bits.ckpt");
  io::write_archive(path, a);
  const io::Archive r = io::read_archive(path);

  REQUIRE(r.size() == a.size());
  // Order preserved.
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(r.entries()[i].name == a.entries()[i].name);

  check_same_vec(r.values("weird"), a.values("weird"));
  CHECK(r.values("empty").empty());
  CHECK(same_bits(r.scalar("one"), -2.5));
  CHECK(r.u64("umax") == ~0ull);
  CHECK(r.u64("uzero") == 0);
  CHECK(r.i64s("ints") ==
        std::vector<std::int64_t>{-5, 7, std::numeric_limits<std::int64_t>::min()});
  CHECK(r.string("empty_str") == "");
  for (std::size_t n = 1; n <= 17; ++n)
    CHECK(r.string("s" + std::to_string(n)) ==
          std::string(n, 'a' + char(n % 26)));
  CHECK(r.string("binary") == std::string("\x00\xff\x01", 3));

  CHECK_THROWS_AS(r.values("nope"), std::runtime_error);
  CHECK(thrown_message([&] { r.values("nope"); }).find("nope") !=
        std::string::npos);
  io::Archive dup;
  dup.add("x", {1.0});
  CHECK_THROWS_AS(dup.add("x", {2.0}), std::invalid_argument);
}

TEST_CASE("archive detects any single corrupted byte and any truncation") {
  TempDir tmp;
  io::Archive a;
  a.add("alpha", {1.5, -0.25});
  a.add_string("name", "hi");
  const std::string good = tmp.file("good.ckpt");
  io::write_archive(good, a);
  auto bytes = slurp(good);
  const std::string bad = tmp.file("bad.ckpt");

  std::size_t detected = 0;
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] ^= 0xff;
    spit(bad, bytes);
    try {
      io::read_archive(bad);
    } catch (const std::runtime_error&) {
      ++detected;
    }
    bytes[i] ^= 0xff;
  }
  CHECK(detected == bytes.size());

  for (std::size_t len = 0; len < bytes.size(); ++len) {
    spit(bad, {bytes.begin(), bytes.begin() + len});
    CHECK_THROWS_AS(io::read_archive(bad), std::runtime_error);
  }
  // The untouched file still loads.
  CHECK_NOTHROW(io::read_archive(good));

  CHECK(thrown_message([&] { io::read_archive(tmp.file("absent.ckpt")); })
            .find("cannot open") != std::string::npos);
}

TEST_CASE("empty config text is the default config; one key changes one field") {
  const io::RunConfig base = io::parse_config("");
  CHECK(base == io::RunConfig{});

  const io::RunConfig seeded = io::parse_config(
      "# a comment\n\n   loop.seed=7   \n");
  io::RunConfig expect;
  expect.loop.seed = 7;
  CHECK(seeded == expect);
}

TEST_CASE("config errors name the key and the line") {
  const std::string unknown = thrown_message([] {
    io::parse_config("# header\nloop.beta = 1\nloop.betaa = 2\n", "x.ini");
  });
  CHECK(unknown.find("x.ini:3") != std::string::npos);
  CHECK(unknown.find("loop.betaa") != std::string::npos);

  const std::string type_err = thrown_message([] {
    io::parse_config("loop.beta = fast\n", "x.ini");
  });
  CHECK(type_err.find("x.ini:1") != std::string::npos);
  CHECK(type_err.find("loop.beta") != std::string::npos);
  CHECK(type_err.find("fast") != std::string::npos);

  const std::string dup = thrown_message([] {
    io::parse_config("loop.beta = 1\nloop.beta = 2\n", "x.ini");
  });
  CHECK(dup.find("x.ini:2") != std::string::npos);
  CHECK(dup.find("duplicate") != std::string::npos);

  const std::string no_eq = thrown_message([] {
    io::parse_config("loop.beta\n", "x.ini");
  });
  CHECK(no_eq.find("x.ini:1") != std::string::npos);

  const std::string bad_enum = thrown_message([] {
    io::parse_config("loop.window = newest\n", "x.ini");
  });
  CHECK(bad_enum.find("latest | full_process") != std::string::npos);

  const std::string bad_version = thrown_message([] {
    io::parse_config("version = 2\n", "x.ini");
  });
  CHECK(bad_version.find("version") != std::string::npos);

  // Structural validation still runs, prefixed with the origin.
  const std::string invalid = thrown_message([] {
    io::parse_config("loop.dataset_size = 3\n", "x.ini");
  });
  CHECK(invalid.find("x.ini") != std::string::npos);

  CHECK_THROWS_AS(io::load_config("/nonexistent/path.ini"), std::runtime_error);
}

TEST_CASE("schedule grammar parses and formats exactly") {
  const auto sched = io::parse_schedule(
      "0: -1*tracking_error; 40: cadence, -0.25*action_cost");
  REQUIRE(sched.size() == 2);
  CHECK(sched[0].from_epoch == 0);
  REQUIRE(sched[0].criteria.size() == 1);
  CHECK(sched[0].criteria[0].feature == "tracking_error");
  CHECK(same_bits(sched[0].criteria[0].weight, -1.0));
  CHECK(sched[1].from_epoch == 40);
  REQUIRE(sched[1].criteria.size() == 2);
  CHECK(sched[1].criteria[0].feature == "cadence");
  CHECK(same_bits(sched[1].criteria[0].weight, 1.0));
  CHECK(sched[1].criteria[1].feature == "action_cost");
  CHECK(same_bits(sched[1].criteria[1].weight, -0.25));

  CHECK(io::parse_schedule(io::format_schedule(sched)) == sched);
  CHECK(io::parse_schedule("").empty());
  CHECK(io::format_schedule({}).empty());

  CHECK_THROWS_AS(io::parse_schedule("10 cadence"), std::invalid_argument);
  CHECK_THROWS_AS(io::parse_schedule("10:"), std::invalid_argument);
  CHECK_THROWS_AS(io::parse_schedule("10: 2*"), std::invalid_argument);
  CHECK_THROWS_AS(io::parse_schedule("x: cadence"), std::invalid_argument);
}

TEST_CASE("config serialize/parse round-trip preserves every field") {
  io::RunConfig c;
  c.env_name = "gait_walker";
  c.replay_file = "labels.jsonl";
  c.prompt_file = "walker.prompt";
  c.env.dt = 0.02;
  c.env.episode_len = 300;
  c.env.drag = 0.7;
  c.env.action_scale = 1.5;
  c.env.command_min = 0.1;
  c.env.command_max = 2.5;
  c.policy.hidden = {24, 12};
  c.policy.init_logstd = -0.5;
  c.policy.logstd_min = -4.0;
  c.policy.logstd_max = 1.5;
  c.policy.lr = 1.0 / 3.0;
  c.ppo.gamma = 0.9;
  c.ppo.lambda = 0.8;
  c.ppo.clip_ratio = 0.1;
  c.ppo.update_epochs = 2;
  c.ppo.minibatches = 3;
  c.ppo.value_coef = 0.7;
  c.ppo.entropy_coef = 0.001;
  c.predictor.mode = pref::PredictorMode::non_markovian;
  c.predictor.context_length = 4;
  c.predictor.width = 24;
  c.predictor.heads = 3;
  c.predictor.blocks = 2;
  c.predictor.mlp_variant = false;
  c.predictor.mlp_hidden = {5, 3};
  c.predictor.feature_dim = 7;
  c.predictor.include_actions = false;
  c.predictor.label_noise_eps = 0.3;
  c.trainer.pool_size = 5;
  c.trainer.ensemble_size = 2;
  c.trainer.min_epochs = 2;
  c.trainer.max_epochs = 9;
  c.trainer.overfit_alpha = 1.7;
  c.trainer.train_parts = 4;
  c.trainer.val_parts = 2;
  c.trainer.batch_size = 16;
  c.trainer.lr = 1e-5;
  c.loop.total_epochs = 77;
  c.loop.update_interval = 3;
  c.loop.pairs_per_epoch = 2;
  c.loop.rollouts = 4;
  c.loop.steps = 48;
  c.loop.dataset_size = 10;
  c.loop.window = loop::DatasetWindow::full_process;
  c.loop.beta = -0.5;
  c.loop.segment_len = 12;
  c.loop.annotation_batch = 3;
  c.loop.standardize_rp = true;
  c.loop.dt = 0.1;
  c.loop.seed = 0xDEADBEEFCAFEF00Dull;
  c.annotator.backend = annot::AnnotatorBackend::llm;
  c.annotator.samples_per_pair = 7;
  c.annotator.batch_size = 3;
  c.annotator.schedule = {{0, {{"tracking_error", -1.0}}},
                          {5, {{"cadence", 0.1}, {"sync_error", -2.0}}}};
  c.annotator.tie_tolerance = 1e-6;
  c.annotator.dt = 0.1;
  c.annotator.llm.base_url = "http://example.invalid:9/label";
  c.annotator.llm.model = "local-model";
  c.annotator.llm.temperature = 0.25;
  c.annotator.llm.max_retries = 4;
  c.annotator.llm.timeout_s = 7.5;

  const std::string text = io::serialize_config(c);
  const io::RunConfig back = io::parse_config(text, "round.ini");
  CHECK(back == c);
  CHECK(same_bits(back.policy.lr, 1.0 / 3.0));
  CHECK(same_bits(back.loop.beta, -0.5));
  CHECK(back.loop.seed == 0xDEADBEEFCAFEF00Dull);
  // Serialization is a fixed point.
  CHECK(io::serialize_config(back) == text);
}

TEST_CASE("format_double is shortest round-trip text") {
  for (double v : {0.1, 1.0 / 3.0, 1e308, 5e-324, -2.5, 0.0, 1234.5678,
                   -1e-7}) {
    const std::string s = io::format_double(v);
    double back = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), back);
    REQUIRE(ec == std::errc());
    CHECK(p == s.data() + s.size());
    CHECK(same_bits(back, v));
  }
  CHECK(io::format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
}

TEST_CASE("metrics rows round-trip through JSON with NaN as null") {
  loop::MetricsRow r;
  r.epoch = 3;
  r.mean_reward_env = 0.5;
  r.mean_reward_pref = -1.25;
  r.tracking_error = 2.0;
  r.sync_error = std::numeric_limits<double>::quiet_NaN();
  r.cadence = 0.75;
  r.mean_velocity = -3.0;
  r.ppo = {0.125, 10.0, -0.5, 0.0625, 1.0};
  r.predictor_updated = true;
  r.annotation_failed = false;
  r.predictor_val_loss = 0.25;
  r.labels = {4, 3, 2, 1};
  r.labeled = 9;
  r.discarded = 1;
  r.dataset_size = 10;
  r.buffer_size = 0;

  const std::string line = io::metrics_json_line(r);
  CHECK(line.find("\"sync_error\":null") != std::string::npos);
  CHECK(line.find("\"predictor_updated\":true") != std::string::npos);
  CHECK(line.find("nan") == std::string::npos);
  // Fixed key order, epoch first.
  CHECK(line.rfind("{\"epoch\":3,", 0) == 0);

  const loop::MetricsRow back = io::metrics_from_json(line);
  CHECK(std::isnan(back.sync_error));
  check_rows_equal(r, back);

  // The independent straight-line CSV expectation for the same row.
  CHECK(io::metrics_csv_line(r) ==
        "3,0.5,-1.25,2,nan,0.75,-3,0.125,10,-0.5,0.0625,1,1,0,0.25,4,3,2,1,9,"
        "1,10,0");
  // Header and row have the same number of columns.
  const std::string header = io::metrics_csv_header();
  const auto count_commas = [](const std::string& s) {
    return std::count(s.begin(), s.end(), ',');
  };
  CHECK(count_commas(header) == count_commas(io::metrics_csv_line(r)));
}

TEST_CASE("metrics writer appends, trims on resume, and rejects regressions") {
  TempDir tmp;
  std::vector<loop::MetricsRow> rows(5);
  for (std::size_t e = 0; e < rows.size(); ++e) {
    rows[e].epoch = e;
    rows[e].mean_reward_env = 0.5 * double(e);
    rows[e].sync_error = std::numeric_limits<double>::quiet_NaN();
  }

  {
    io::MetricsWriter w(tmp.path.string());
    for (const auto& r : rows) w.write(r);
    loop::MetricsRow stale = rows[4];
    CHECK_THROWS_AS(w.write(stale), std::logic_error);
  }
  const auto back = io::read_metrics_jsonl(tmp.file("metrics.jsonl"));
  REQUIRE(back.size() == 5);
  for (std::size_t e = 0; e < 5; ++e) check_rows_equal(rows[e], back[e]);

  {
    std::ifstream csv(tmp.file("metrics.csv"));
    std::string line;
    std::size_t lines = 0;
    while (std::getline(csv, line)) ++lines;
    CHECK(lines == 6);  // header + 5 rows
  }

  // Resume from epoch 3: rows 3 and 4 are dropped, then rewritten.
  {
    io::MetricsWriter w(tmp.path.string(), 3);
    loop::MetricsRow r3 = rows[3];
    r3.mean_reward_env = 99.0;
    w.write(r3);
  }
  const auto resumed = io::read_metrics_jsonl(tmp.file("metrics.jsonl"));
  REQUIRE(resumed.size() == 4);
  CHECK(same_bits(resumed[3].mean_reward_env, 99.0));
  for (std::size_t e = 0; e < 3; ++e) check_rows_equal(rows[e], resumed[e]);

  // A fresh writer truncates.
  {
    io::MetricsWriter w(tmp.path.string());
  }
  CHECK(io::read_metrics_jsonl(tmp.file("metrics.jsonl")).empty());
}

TEST_CASE("directory lock is exclusive, stale-safe, and released") {
  TempDir tmp;
  const std::string dir = tmp.path.string();
  {
    io::DirLock lock(dir);
    CHECK(fs::exists(lock.path()));
    const std::string msg = thrown_message([&] { io::DirLock second(dir); });
    CHECK(msg.find(".lapp.lock") != std::string::npos);
    CHECK(msg.find(std::to_string(::getpid())) != std::string::npos);
  }
  // Released on destruction.
  CHECK_FALSE(fs::exists(dir + "/.lapp.lock"));
  { io::DirLock again(dir); }

  // A lock held by a dead process is stale and gets replaced.
  const pid_t child = fork();
  REQUIRE(child >= 0);
  if (child == 0) _exit(0);
  waitpid(child, nullptr, 0);
  std::ofstream(dir + "/.lapp.lock") << child << "\n";
  CHECK_NOTHROW(io::DirLock stale(dir));
}

TEST_CASE("segment, pair, and triple files round-trip line by line") {
  TempDir tmp;
  const auto pairs = some_pairs(3, 99);

  std::vector<pref::TrajectorySegment> segs;
  for (const auto& p : pairs) {
    segs.push_back(p.a);
    segs.push_back(p.b);
  }
  io::write_segments_jsonl(tmp.file("segs.jsonl"), segs);
  const auto segs_back = io::read_segments_jsonl(tmp.file("segs.jsonl"));
  REQUIRE(segs_back.size() == segs.size());
  for (std::size_t i = 0; i < segs.size(); ++i)
    CHECK(pref::segment_to_json(segs_back[i]) == pref::segment_to_json(segs[i]));

  io::write_pairs_jsonl(tmp.file("pairs.jsonl"), pairs);
  const auto pairs_back = io::read_pairs_jsonl(tmp.file("pairs.jsonl"));
  REQUIRE(pairs_back.size() == pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(pref::segment_to_json(pairs_back[i].a) == pref::segment_to_json(pairs[i].a));
    CHECK(pref::segment_to_json(pairs_back[i].b) == pref::segment_to_json(pairs[i].b));
  }

  std::vector<pref::PreferenceTriple> triples;
  for (const auto& p : pairs) triples.push_back({p.a, p.b, 0.5});
  io::write_triples_jsonl(tmp.file("triples.jsonl"), triples);
  const auto triples_back = io::read_triples_jsonl(tmp.file("triples.jsonl"));
  REQUIRE(triples_back.size() == triples.size());
  for (std::size_t i = 0; i < triples.size(); ++i)
    CHECK(pref::triple_to_json(triples_back[i]) == pref::triple_to_json(triples[i]));

  // Errors carry the file and line of the offending record.
  std::ofstream(tmp.file("bad.jsonl")) << "{\"broken\n";
  const std::string msg =
      thrown_message([&] { io::read_triples_jsonl(tmp.file("bad.jsonl")); });
  CHECK(msg.find("bad.jsonl:1") != std::string::npos);
}

TEST_CASE("recording annotator leaves a replayable label trail") {
  TempDir tmp;
  const auto pairs = some_pairs(5, 7);
  annot::OracleAnnotator oracle(tracking_schedule(), 0.05, 1e-12);
  const std::vector<annot::RawLabel> direct = oracle.annotate(pairs);

  const std::string path = tmp.file("labels.jsonl");
  {
    annot::OracleAnnotator inner(tracking_schedule(), 0.05, 1e-12);
    io::RecordingAnnotator rec(inner, path);
    const auto through = rec.annotate(std::span(pairs).subspan(0, 2));
    const auto rest = rec.annotate(std::span(pairs).subspan(2));
    CHECK(through == std::vector<annot::RawLabel>(direct.begin(), direct.begin() + 2));
    CHECK(rest == std::vector<annot::RawLabel>(direct.begin() + 2, direct.end()));
  }

  const auto table = annot::read_replay_file(path);
  REQUIRE(table.size() == pairs.size());  // distinct pairs, distinct hashes
  for (std::size_t i = 0; i < pairs.size(); ++i)
    CHECK(table.at(pref::pair_hash(pairs[i].a, pairs[i].b)) == direct[i]);

  annot::ReplayAnnotator replay = annot::ReplayAnnotator::from_file(path);
  CHECK(replay.annotate(pairs) == direct);
}

TEST_CASE("builders construct the configured environment and annotator") {
  io::RunConfig pm = pm_baseline_config();
  const auto pm_env = io::build_env_factory(pm)();
  CHECK(pm_env->obs_dim() == 2);
  CHECK(pm_env->action_dim() == 1);

  io::RunConfig gw = walker_run_config();
  const auto gw_env = io::build_env_factory(gw)();
  CHECK(gw_env->obs_dim() == 15);
  CHECK(gw_env->action_dim() == 5);

  // Oracle backend labels like a directly built oracle.
  const auto pairs = some_pairs(3, 11);
  auto built = io::build_annotator(gw);
  annot::OracleAnnotator direct(tracking_schedule(), gw.annotator.dt,
                                gw.annotator.tie_tolerance);
  CHECK(built->annotate(pairs) == direct.annotate(pairs));

  io::RunConfig no_sched = pm;
  no_sched.annotator.backend = annot::AnnotatorBackend::oracle;
  CHECK(thrown_message([&] { io::build_annotator(no_sched); })
            .find("annotator.schedule") != std::string::npos);

  io::RunConfig replay = pm;
  replay.annotator.backend = annot::AnnotatorBackend::replay;
  CHECK(thrown_message([&] { io::build_annotator(replay); })
            .find("annotator.replay_file") != std::string::npos);
}

TEST_CASE("checkpoint round-trips the full preference loop bit for bit") {
  TempDir tmp;
  const io::RunConfig cfg = walker_run_config();
  auto ann_a = io::build_annotator(cfg);
  loop::LappLoop a = io::build_loop(cfg, ann_a.get());
  a.initialize();
  for (int e = 0; e < 3; ++e) a.run_epoch();

  const std::string path = tmp.file("run.ckpt");
  io::save_checkpoint(path, cfg, a);

  const io::Archive arch = io::read_archive(path);
  CHECK(io::checkpoint_config(arch) == cfg);

  auto ann_b = io::build_annotator(cfg);
  loop::LappLoop b = io::build_loop(cfg, ann_b.get());
  io::restore_loop(arch, b);
  CHECK(b.initialized());
  CHECK(b.epoch() == 3);
  check_loops_equal(a, b);

  // Both continue identically to the end.
  while (a.epoch() < cfg.loop.total_epochs)
    check_rows_equal(a.run_epoch(), b.run_epoch());
  check_same_vec(param_values(a.policy()), param_values(b.policy()));
}

TEST_CASE("crash-resume from disk reproduces the uninterrupted stream") {
  TempDir tmp;
  const io::RunConfig cfg = walker_run_config();

  auto ann_full = io::build_annotator(cfg);
  loop::LappLoop full = io::build_loop(cfg, ann_full.get());
  const std::vector<loop::MetricsRow> stream = full.run();
  REQUIRE(stream.size() == cfg.loop.total_epochs);

  // The "crashing" process saves after epoch 4 and dies with it.
  const std::string path = tmp.file("crash.ckpt");
  {
    auto ann = io::build_annotator(cfg);
    loop::LappLoop part = io::build_loop(cfg, ann.get());
    part.initialize();
    for (int e = 0; e < 4; ++e) part.run_epoch();
    io::save_checkpoint(path, cfg, part);
  }

  auto ann_res = io::build_annotator(cfg);
  loop::LappLoop resumed = io::build_loop(cfg, ann_res.get());
  io::restore_loop(io::read_archive(path), resumed);
  CHECK(resumed.epoch() == 4);
  for (std::size_t e = 4; e < cfg.loop.total_epochs; ++e)
    check_rows_equal(stream[e], resumed.run_epoch());
}

TEST_CASE("baseline loop checkpoints without any preference state") {
  TempDir tmp;
  const io::RunConfig cfg = pm_baseline_config();
  loop::LappLoop a = io::build_loop(cfg, nullptr);
  a.initialize();
  a.run_epoch();
  a.run_epoch();

  const std::string path = tmp.file("pm.ckpt");
  io::save_checkpoint(path, cfg, a);
  const io::Archive arch = io::read_archive(path);
  CHECK(arch.u64("ensemble/count") == 0);
  CHECK(arch.u64("windows/count") == 0);
  CHECK(arch.u64("buffer/count") == 0);
  CHECK(arch.u64("dataset/count") == 0);

  loop::LappLoop b = io::build_loop(cfg, nullptr);
  io::restore_loop(arch, b);
  check_loops_equal(a, b);
  while (a.epoch() < cfg.loop.total_epochs)
    check_rows_equal(a.run_epoch(), b.run_epoch());
}

TEST_CASE("restore rejects mismatched archives and leaves the loop untouched") {
  TempDir tmp;
  const io::RunConfig cfg = pm_baseline_config();
  loop::LappLoop src = io::build_loop(cfg, nullptr);
  src.initialize();
  src.run_epoch();
  const std::string path = tmp.file("src.ckpt");
  io::save_checkpoint(path, cfg, src);

  // A loop with a different policy shape cannot accept this archive.
  io::RunConfig other = cfg;
  other.policy.hidden = {6};
  loop::LappLoop victim = io::build_loop(other, nullptr);
  victim.initialize();
  const std::vector<double> before = param_values(victim.policy());
  const std::string before_rng = victim.action_rng().save_state();

  const io::Archive arch = io::read_archive(path);
  CHECK(thrown_message([&] { io::restore_loop(arch, victim); })
            .find("does not match") != std::string::npos);
  check_same_vec(before, param_values(victim.policy()));
  CHECK(victim.action_rng().save_state() == before_rng);
  CHECK(victim.epoch() == 0);

  // Same with a tampered entry: valid checksums, wrong content.
  io::Archive tampered;
  for (const io::ArchiveEntry& e : arch.entries()) {
    if (e.name == "policy/param_count")
      tampered.add_u64(e.name, 999);
    else
      tampered.add(e.name, e.values);
  }
  const std::string tp = tmp.file("tampered.ckpt");
  io::write_archive(tp, tampered);
  loop::LappLoop fresh = io::build_loop(cfg, nullptr);
  fresh.initialize();
  CHECK_THROWS_AS(io::restore_loop(io::read_archive(tp), fresh),
                  std::runtime_error);

  // Unsaved or foreign configs are rejected on the save side too.
  loop::LappLoop uninit = io::build_loop(cfg, nullptr);
  CHECK_THROWS_AS(io::checkpoint_archive(cfg, uninit), std::logic_error);
  CHECK_THROWS_AS(io::checkpoint_archive(other, src), std::invalid_argument);
}

TEST_CASE("checkpoint_policy extracts the bundle for eval and transfer") {
  TempDir tmp;
  const io::RunConfig cfg = pm_baseline_config();
  loop::LappLoop src = io::build_loop(cfg, nullptr);
  src.run();
  const std::string path = tmp.file("src.ckpt");
  io::save_checkpoint(path, cfg, src);

  const io::Archive arch = io::read_archive(path);
  rl::PolicyBundle bundle = io::checkpoint_policy(arch, io::checkpoint_config(arch));
  check_same_vec(param_values(bundle), param_values(src.policy()));
  CHECK(bundle.optimizer().step_count() == src.policy().optimizer().step_count());
  CHECK(same_bits(bundle.normalizer().count(), src.policy().normalizer().count()));

  // The extracted bundle fine-tunes in a drag-shifted target env.
  io::RunConfig target = cfg;
  target.env.drag = 0.9;
  target.loop.total_epochs = 1;
  target.loop.seed = 22;
  loop::LappLoop ft = loop::transfer_finetune(
      std::move(bundle), io::build_env_factory(target), target.loop,
      target.predictor, target.trainer, target.ppo, nullptr);
  const auto rows = ft.run();
  CHECK(rows.size() == 1);
}
