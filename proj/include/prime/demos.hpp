#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prime/primitives.hpp"
#include "prime/world.hpp"

namespace prime {

// A low-level demonstration: frames (s_t, a_t) for t < T plus s_T. Carries
// no primitive annotations.
struct Demonstration {
  std::string task;
  std::uint64_t seed = 0;
  std::vector<Transition> frames;
  WorldState final_state;
  friend bool operator==(const Demonstration&, const Demonstration&) = default;

  std::size_t length() const { return frames.size(); }
  // s_t for t in [0, T].
  const WorldState& state(std::size_t t) const {
    return t < frames.size() ? frames[t].state : final_state;
  }
};

struct DemoConfig {
  double speed = 0.01;          // per-axis m/step, half the motor clamp
  double waypoint_tolerance = 0.004;
  double grasp_height = 0.01;
  double place_height = 0.02;
  double retreat_height = 0.12;
  double safe_height = 0.25;
  int attempts = 5;
  int step_cap = 1500;
};

// Privileged-state scripted demonstrator. Noise is uniform in
// [-noise, noise] times the per-component motor clamp, added before
// clamping. Throws DemoFailure after `attempts` failed tries.
Demonstration script_demo(const TaskSpec& task, std::uint64_t seed, double noise,
                          const DemoConfig& cfg = {});

// Demo i of a batch uses seed derive(base_seed, i); generated concurrently,
// returned in index order.
std::vector<Demonstration> script_demos(const TaskSpec& task, std::uint64_t base_seed, int count,
                                        double noise, int workers = 1, const DemoConfig& cfg = {});
std::uint64_t demo_seed(std::uint64_t base_seed, int index);

void save_demos(const std::vector<Demonstration>& demos, const std::string& path);
std::vector<Demonstration> load_demos(const std::string& path);

// Re-simulates the recorded actions from frame 0; true iff every recorded
// state and the final state are reproduced exactly.
bool replays_exactly(const Demonstration& demo);

}  // namespace prime
