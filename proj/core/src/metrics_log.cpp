#include "lapp/io/metrics_log.hpp"

#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "json.hpp"
#include "lapp/io/config.hpp"

namespace lapp::io {

namespace {

// nlohmann serializes non-finite doubles as null on its own; reading needs
// the reverse mapping made explicit.
double json_double(const nlohmann::json& v, const char* key) {
  const auto& x = v.at(key);
  if (x.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return x.get<double>();
}

}  // namespace

std::string metrics_json_line(const loop::MetricsRow& row) {
  nlohmann::ordered_json j;
  j["epoch"] = row.epoch;
  j["mean_reward_env"] = row.mean_reward_env;
  j["mean_reward_pref"] = row.mean_reward_pref;
  j["tracking_error"] = row.tracking_error;
  j["sync_error"] = row.sync_error;
  j["cadence"] = row.cadence;
  j["mean_velocity"] = row.mean_velocity;
  j["policy_loss"] = row.ppo.policy_loss;
  j["value_loss"] = row.ppo.value_loss;
  j["entropy"] = row.ppo.entropy;
  j["approx_kl"] = row.ppo.approx_kl;
  j["clip_fraction"] = row.ppo.clip_fraction;
  j["predictor_updated"] = row.predictor_updated;
  j["annotation_failed"] = row.annotation_failed;
  j["predictor_val_loss"] = row.predictor_val_loss;
  j["labels_0"] = row.labels[0];
  j["labels_1"] = row.labels[1];
  j["labels_2"] = row.labels[2];
  j["labels_3"] = row.labels[3];
  j["labeled"] = row.labeled;
  j["discarded"] = row.discarded;
  j["dataset_size"] = row.dataset_size;
  j["buffer_size"] = row.buffer_size;
  return j.dump();
}

loop::MetricsRow metrics_from_json(const std::string& line) {
  const nlohmann::json j = nlohmann::json::parse(line);
  loop::MetricsRow r;
  r.epoch = j.at("epoch").get<std::size_t>();
  r.mean_reward_env = json_double(j, "mean_reward_env");
  r.mean_reward_pref = json_double(j, "mean_reward_pref");
  r.tracking_error = json_double(j, "tracking_error");
  r.sync_error = json_double(j, "sync_error");
  r.cadence = json_double(j, "cadence");
  r.mean_velocity = json_double(j, "mean_velocity");
  r.ppo.policy_loss = json_double(j, "policy_loss");
  r.ppo.value_loss = json_double(j, "value_loss");
  r.ppo.entropy = json_double(j, "entropy");
  r.ppo.approx_kl = json_double(j, "approx_kl");
  r.ppo.clip_fraction = json_double(j, "clip_fraction");
  r.predictor_updated = j.at("predictor_updated").get<bool>();
  r.annotation_failed = j.at("annotation_failed").get<bool>();
  r.predictor_val_loss = json_double(j, "predictor_val_loss");
  r.labels[0] = j.at("labels_0").get<std::size_t>();
  r.labels[1] = j.at("labels_1").get<std::size_t>();
  r.labels[2] = j.at("labels_2").get<std::size_t>();
  r.labels[3] = j.at("labels_3").get<std::size_t>();
  r.labeled = j.at("labeled").get<std::size_t>();
  r.discarded = j.at("discarded").get<std::size_t>();
  r.dataset_size = j.at("dataset_size").get<std::size_t>();
  r.buffer_size = j.at("buffer_size").get<std::size_t>();
  return r;
}

std::string metrics_csv_header() {
  return "epoch,mean_reward_env,mean_reward_pref,tracking_error,sync_error,"
         "cadence,mean_velocity,policy_loss,value_loss,entropy,approx_kl,"
         "clip_fraction,predictor_updated,annotation_failed,"
         "predictor_val_loss,labels_0,labels_1,labels_2,labels_3,labeled,"
         "discarded,dataset_size,buffer_size";
}

std::string metrics_csv_line(const loop::MetricsRow& row) {
  std::string out = std::to_string(row.epoch);
  const auto f = [&out](double v) { out += "," + format_double(v); };
  const auto n = [&out](std::size_t v) { out += "," + std::to_string(v); };
  f(row.mean_reward_env);
  f(row.mean_reward_pref);
  f(row.tracking_error);
  f(row.sync_error);
  f(row.cadence);
  f(row.mean_velocity);
  f(row.ppo.policy_loss);
  f(row.ppo.value_loss);
  f(row.ppo.entropy);
  f(row.ppo.approx_kl);
  f(row.ppo.clip_fraction);
  out += row.predictor_updated ? ",1" : ",0";
  out += row.annotation_failed ? ",1" : ",0";
  f(row.predictor_val_loss);
  n(row.labels[0]);
  n(row.labels[1]);
  n(row.labels[2]);
  n(row.labels[3]);
  n(row.labeled);
  n(row.discarded);
  n(row.dataset_size);
  n(row.buffer_size);
  return out;
}

std::vector<loop::MetricsRow> read_metrics_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("metrics: cannot open '" + path + "'");
  std::vector<loop::MetricsRow> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    rows.push_back(metrics_from_json(line));
  }
  return rows;
}

MetricsWriter::MetricsWriter(const std::string& dir, std::size_t resume_epoch)
    : jsonl_path_(dir + "/metrics.jsonl"), csv_path_(dir + "/metrics.csv") {
  std::vector<loop::MetricsRow> kept;
  if (resume_epoch > 0 && std::filesystem::exists(jsonl_path_)) {
    for (loop::MetricsRow& r : read_metrics_jsonl(jsonl_path_))
      if (r.epoch < resume_epoch) kept.push_back(std::move(r));
  }

  jsonl_.open(jsonl_path_, std::ios::trunc);
  csv_.open(csv_path_, std::ios::trunc);
  if (!jsonl_ || !csv_)
    throw std::runtime_error("metrics: cannot write into '" + dir + "'");
  csv_ << metrics_csv_header() << "\n";
  for (const loop::MetricsRow& r : kept) {
    jsonl_ << metrics_json_line(r) << "\n";
    csv_ << metrics_csv_line(r) << "\n";
    last_epoch_ = r.epoch;
  }
  jsonl_.flush();
  csv_.flush();
}

void MetricsWriter::write(const loop::MetricsRow& row) {
  if (last_epoch_ && row.epoch <= *last_epoch_)
    throw std::logic_error("metrics: epoch " + std::to_string(row.epoch) +
                           " does not extend the stream (last was " +
                           std::to_string(*last_epoch_) + ")");
  jsonl_ << metrics_json_line(row) << "\n";
  csv_ << metrics_csv_line(row) << "\n";
  jsonl_.flush();
  csv_.flush();
  if (!jsonl_ || !csv_)
    throw std::runtime_error("metrics: write failed");
  last_epoch_ = row.epoch;
}

}  // namespace lapp::io
