#pragma once

// Two-level imitation policy: pi_prim(p | s) over the primitive library and
// per-type mixture heads pi_param(x | s, p). Trained on parsed segments plus
// stepwise-augmented tuples, optionally pretrained on IDM positives. Also the
// flat behavioral-cloning baseline over motor actions.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "prime/demos.hpp"
#include "prime/idm.hpp"
#include "prime/parser.hpp"

namespace prime {

enum class TupleSource { kParsed, kAugmented, kPretrain };
const char* to_string(TupleSource s);

struct PolicyTuple {
  std::vector<double> s;
  PrimitiveType p = PrimitiveType::kReach;
  PrimitiveParams x;
  TupleSource source = TupleSource::kParsed;
  std::int64_t state_index = -1;  // demo frame of s
  std::int64_t target_end = -1;   // segment end the tuple explains
};

struct AugmentStats {
  std::size_t tuples = 0;
  std::size_t disagreements = 0;  // augmented type differs from the segment's
};

// Segment-start tuples of every library segment; Other segments are skipped.
std::vector<PolicyTuple> parsed_tuples(const ParsedSequence& parsed, const Demonstration& demo,
                                       std::size_t roster_size);

// For every interior frame l of each library segment (t_d, t_{d+1}), the
// IDM argmax over library types of (s_l, s_{t_{d+1}}) and its parameter mode.
std::vector<PolicyTuple> augment_stepwise(const ParsedSequence& parsed, const Demonstration& demo,
                                          const IdmModels& models, std::size_t roster_size,
                                          AugmentStats* stats = nullptr);

struct PolicyConfig {
  nn::TrainConfig pretrain;
  nn::TrainConfig finetune;
  double sigma_min = 1e-3;
  bool use_pretrain = true;
  bool augment = true;
  double augmented_weight = 1.0;
  int workers = 1;

  PolicyConfig();
  void validate() const;
  Json to_json() const;
  static PolicyConfig from_json(const Json& j);
};

struct PrimitivePolicy {
  int feature_dim = 0;
  std::array<bool, kNumClasses> allowed{};  // Other is always false
  nn::Normalizer norm;
  nn::Mlp net;
  nn::TrainingCurve pretrain_curve;
  nn::TrainingCurve finetune_curve;

  nn::Matrix log_probs(const nn::Matrix& s) const;  // rows = classes
};

struct PolicyBundle {
  std::string task;
  int feature_dim = 0;
  PrimitivePolicy prim;
  std::array<ParamModel, kNumLibraryPrimitives> params;  // input is s alone
  std::array<nn::TrainingCurve, kNumLibraryPrimitives> param_pretrain_curves;
};

// Fits on the initial-state features of IDM positives (Other excluded).
PolicyBundle pretrain_policy(const IdmDataset& data, const PolicyConfig& cfg);

// Continues from `init` (or from scratch when init is null) on the tuples.
PolicyBundle finetune_policy(const PolicyBundle* init, const std::vector<PolicyTuple>& tuples,
                             const std::string& task, int feature_dim, const PolicyConfig& cfg);

enum class RolloutMode { kModeSelect, kSample };

struct EpisodeResult {
  bool success = false;
  int primitives_executed = 0;
  std::vector<PrimitiveType> types;
  // Failed grasps followed by another primitive, and how many of those
  // follow-ups were again a Grasp (with different parameters).
  int failed_grasps = 0;
  int grasp_retries = 0;
  int grasp_retries_adjusted = 0;
};

// Picks (p, x) from the policy for state s; x is clamped into legal ranges.
std::pair<PrimitiveType, PrimitiveParams> policy_act(const PolicyBundle& policy, const WorldState& s,
                                                     std::size_t roster_size, RolloutMode mode, Rng& rng);

EpisodeResult rollout_policy(const PolicyBundle& policy, const TaskSpec& task, std::uint64_t seed, int max_prims,
                             RolloutMode mode, const PrimitiveConfig& pcfg = {});

// Flat BC ---------------------------------------------------------------------

// Motor actions are encoded as (dx, dy, dz, dyaw) / clamp and grip as -1 (open)
// or +1 (close).
std::vector<double> encode_action(const MotorAction& a);
MotorAction decode_action(std::span<const double> v);  // clamped; grip by sign

struct BcConfig {
  nn::TrainConfig train;
  // In normalized action units. Small floors let narrow low-weight
  // components win the mode and the rollout drifts.
  double sigma_min = 0.7;
  int max_steps = 1000;

  BcConfig();
  void validate() const;
  Json to_json() const;
  static BcConfig from_json(const Json& j);
};

struct FlatBcPolicy {
  std::string task;
  int feature_dim = 0;
  nn::MixtureSpec spec;
  nn::Normalizer norm;
  nn::Mlp net;
  nn::TrainingCurve curve;

  MotorAction act(const WorldState& s, std::size_t roster_size) const;  // mixture mode
};

FlatBcPolicy train_bc_baseline(const std::vector<Demonstration>& demos, std::size_t roster_size,
                               const BcConfig& cfg);
EpisodeResult rollout_bc(const FlatBcPolicy& policy, const TaskSpec& task, std::uint64_t seed, int max_steps);

// Evaluation -----------------------------------------------------------------

struct EvalSummary {
  int episodes = 0;
  double success_rate = 0.0;
  double mean_primitives = 0.0;
  int failed_grasps = 0;
  int grasp_retries = 0;
  int grasp_retries_adjusted = 0;
};

std::uint64_t eval_seed(std::uint64_t base_seed, int episode);
EvalSummary evaluate_policy(const PolicyBundle& policy, const TaskSpec& task, std::uint64_t base_seed, int episodes,
                            int max_prims, int workers, RolloutMode mode = RolloutMode::kModeSelect);
EvalSummary evaluate_bc(const FlatBcPolicy& policy, const TaskSpec& task, std::uint64_t base_seed, int episodes,
                        int max_steps, int workers);

void save_policy(const PolicyBundle& policy, const std::string& path);
PolicyBundle load_policy(const std::string& path);
void save_bc(const FlatBcPolicy& policy, const std::string& path);
FlatBcPolicy load_bc(const std::string& path);

}  // namespace prime
