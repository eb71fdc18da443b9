#pragma once

#include <array>
#include <string>
#include <vector>

#include "prime/rng.hpp"
#include "prime/world.hpp"

namespace prime {

// Library primitives first so that their values index the IDM class axis;
// kOther is the extra "none of the above" class and kAtomic only tags raw
// motor actions inside collection episodes.
enum class PrimitiveType { kReach = 0, kGrasp = 1, kPlace = 2, kPush = 3, kOther = 4, kAtomic = 5 };

inline constexpr int kNumLibraryPrimitives = 4;
inline constexpr int kNumClasses = 5;  // library + Other
inline constexpr std::array<PrimitiveType, kNumLibraryPrimitives> kLibraryPrimitives = {
    PrimitiveType::kReach, PrimitiveType::kGrasp, PrimitiveType::kPlace, PrimitiveType::kPush};

constexpr int class_index(PrimitiveType p) { return static_cast<int>(p); }
constexpr PrimitiveType class_from_index(int i) { return static_cast<PrimitiveType>(i); }
constexpr bool is_library(PrimitiveType p) { return class_index(p) < kNumLibraryPrimitives; }

const char* to_string(PrimitiveType p);
PrimitiveType primitive_from_string(const std::string& s);

// Reach/Grasp/Place: (x, y, z, yaw). Push: (x, y, z, yaw, dx, dy, dz).
int param_dim(PrimitiveType p);

struct PrimitiveParams {
  std::vector<double> values;
  friend bool operator==(const PrimitiveParams&, const PrimitiveParams&) = default;
  bool empty() const { return values.empty(); }
  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
};

// Legal sampling ranges; all targets sit inside the workspace.
struct ParamRange {
  double lo, hi;
};
std::vector<ParamRange> param_ranges(PrimitiveType p);

struct PrimitiveConfig {
  double safe_height = 0.25;
  double pos_tolerance = 0.005;  // m
  double yaw_tolerance = 0.02;   // rad
  int step_cap = 400;
  double prior_sigma = 0.04;
  double push_success_displacement = 0.02;
  double place_release_tolerance = 0.05;
  double push_max_norm = 0.3;
};

struct Transition {
  WorldState state;
  MotorAction action;
  friend bool operator==(const Transition&, const Transition&) = default;
};

struct Segment {
  std::vector<Transition> transitions;
  WorldState final_state;
  bool timed_out = false;
  friend bool operator==(const Segment&, const Segment&) = default;

  const WorldState& initial_state() const { return transitions.front().state; }
};

// Projects predicted parameters into the legal ranges (push displacement
// rescaled to the norm limit) so learned outputs are always executable.
PrimitiveParams clamp_params(PrimitiveType p, PrimitiveParams x, const PrimitiveConfig& cfg = {});

// Throws PreconditionError for non-library types or wrong parameter arity.
void check_params(PrimitiveType p, const PrimitiveParams& x, const PrimitiveConfig& cfg = {});

// Closed-loop controller: rise to the safe height, translate and turn,
// descend, then the primitive-specific tail (close / open / displace).
Segment execute_primitive(const WorldState& s, PrimitiveType p, const PrimitiveParams& x,
                          const PrimitiveConfig& cfg = {});

bool primitive_success(const Segment& seg, PrimitiveType p, const PrimitiveParams& x,
                       const PrimitiveConfig& cfg = {});

enum class SamplingMode { kUniform, kObjectPrior };
const char* to_string(SamplingMode m);
SamplingMode sampling_mode_from_string(const std::string& s);

// Object-contact primitives (Grasp, Push) draw (x, y) from the object-centred
// mixture in kObjectPrior mode; everything else is uniform over its range.
PrimitiveParams sample_params(PrimitiveType p, const WorldState& s, SamplingMode mode, Rng& rng,
                              const PrimitiveConfig& cfg = {});

// Grasp and Push need an empty gripper, Place a held object; Reach always runs.
bool executable(PrimitiveType p, const WorldState& s);

}  // namespace prime
