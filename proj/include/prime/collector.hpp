#pragma once

// Self-supervised data collection: random primitive / atomic rollouts,
// success filtering, "Other" negatives, and inverse-frequency reweighting.

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "prime/primitives.hpp"
#include "prime/world.hpp"

namespace prime {

// Gripper (x, y, z, sin yaw, cos yaw, aperture, held) followed by
// (x, y, sin theta, cos theta, kind, held) per object in id order. The
// per-object flag tells which object is in hand, so a swap of the held
// object shows up in (s, s').
inline constexpr int kGripperFeatures = 7;
inline constexpr int kObjectFeatures = 6;
int feature_dim(std::size_t object_count);

// Throws RosterMismatch when the state's object count differs from the
// domain roster size.
std::vector<double> featurize(const WorldState& s, std::size_t roster_size);

struct IdmSample {
  std::vector<double> s;
  std::vector<double> s_prime;
  PrimitiveType p = PrimitiveType::kOther;
  PrimitiveParams x;  // empty iff p == Other
  double weight = 1.0;
  // Provenance: episode and trajectory indices of the two endpoints.
  std::int64_t episode = -1;
  std::int64_t start_index = -1;
  std::int64_t end_index = -1;
  std::int64_t audit = -1;  // index into IdmDataset::audit for positives
};

struct AuditRecord {
  WorldState start;
  WorldState end;
};

struct CollectorConfig {
  int episodes = 2000;   // C_p
  int horizon = 15;      // M
  int negatives = 10;    // K
  double primitive_prob = 0.5;
  SamplingMode prior = SamplingMode::kObjectPrior;
  std::uint64_t seed = 0;
  int workers = 1;
  PrimitiveConfig primitive;

  void validate() const;  // ConfigError
};

struct EpisodeOutput {
  std::vector<IdmSample> positives;
  std::vector<IdmSample> negatives;
  std::vector<AuditRecord> positive_audit;  // parallel to positives
  std::vector<WorldState> states;           // s_0 .. s_N
  std::vector<MotorAction> actions;         // a_0 .. a_{N-1}
  std::vector<std::int64_t> boundaries;     // sub-rollout boundaries, 0 and N included
  std::vector<PrimitiveType> rollout_types; // per sub-rollout (Atomic for raw actions)
  int attempted_primitives = 0;
};

EpisodeOutput collect_episode(const TaskSpec& task, const CollectorConfig& cfg, std::int64_t episode_index);

struct IdmDataset {
  std::string task;
  int feature_dim = 0;
  std::size_t roster_size = 0;
  std::uint64_t seed = 0;
  std::vector<IdmSample> samples;
  std::vector<AuditRecord> audit;
  std::array<std::size_t, kNumClasses> counts{};
  std::vector<std::string> warnings;  // MissingType(...) entries

  std::size_t count(PrimitiveType p) const { return counts[class_index(p)]; }
  bool has(PrimitiveType p) const { return count(p) > 0; }
};

// Merges episode outputs in index order, sets weight = 1 / count(type),
// shuffles with `shuffle_seed`. Types with no samples are listed in
// `warnings` as "MissingType(<name>)".
IdmDataset build_dataset(std::vector<EpisodeOutput> outputs, const std::string& task_name,
                         std::size_t roster_size, std::uint64_t shuffle_seed);

// collect_episode over [0, cfg.episodes) on cfg.workers threads, then
// build_dataset. Trajectories are dropped after negatives are drawn.
IdmDataset collect_dataset(const TaskSpec& task, const CollectorConfig& cfg);

std::string dataset_summary(const IdmDataset& data);

void save_dataset(const IdmDataset& data, const std::string& path);  // + "<path>.audit"
IdmDataset load_dataset(const std::string& path, bool with_audit = false);

// Seeded Bernoulli split; the second dataset is the held-out side.
std::pair<IdmDataset, IdmDataset> split_holdout(const IdmDataset& data, double holdout_fraction,
                                                std::uint64_t seed);

}  // namespace prime
