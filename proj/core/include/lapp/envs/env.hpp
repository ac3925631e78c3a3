#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lapp/numerics/dense_array.hpp"
#include "lapp/numerics/rng.hpp"

namespace lapp::envs {

struct EnvConfig {
  double dt = 0.05;                // s per step
  std::size_t episode_len = 240;   // steps until done
  double drag = 0.4;               // velocity decay; the transfer knob
  double action_scale = 1.0;       // gain on acceleration commands
  double command_min = 0.5;        // m/s
  double command_max = 2.0;

  void validate() const;
  bool operator==(const EnvConfig&) const = default;
};

struct StepResult {
  num::DenseArray observation;  // (obs_dim,)
  double reward = 0.0;          // r_E
  bool done = false;
  // One row per channel for this step, matching channel_schema().
  std::map<std::string, num::DenseArray> channels;
};

// Deterministic single-owner environment: (seed, action sequence) fixes the
// trajectory. reset(seed) reseeds the internal stream; reset_continue()
// starts the next episode from that stream so persistent envs stay
// reproducible across epochs.
class Env {
 public:
  virtual ~Env() = default;

  virtual std::size_t obs_dim() const = 0;
  virtual std::size_t action_dim() const = 0;
  virtual const std::map<std::string, std::size_t>& channel_schema() const = 0;

  virtual num::DenseArray reset(std::uint64_t seed) = 0;
  virtual num::DenseArray reset_continue() = 0;
  virtual StepResult step(const num::DenseArray& action) = 0;

  // Checkpoint hooks: the physical state as a flat float vector (round-trips
  // bit-exactly) and the RNG state as text. Together with the action
  // sequence they pin the trajectory across a save/load boundary.
  virtual std::vector<double> sim_state() const = 0;
  virtual void set_sim_state(std::span<const double> state) = 0;
  virtual std::string rng_state() const = 0;
  virtual void set_rng_state(const std::string& state) = 0;
};

}  // namespace lapp::envs
