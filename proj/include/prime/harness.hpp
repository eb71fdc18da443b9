#pragma once

// Experiment orchestration: one config drives collect -> train-idm ->
// demos -> parse -> replay -> policy variants -> eval -> flat BC, with every
// artifact written under a run directory next to the resolved config and a
// checksummed manifest.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "prime/collector.hpp"
#include "prime/idm.hpp"
#include "prime/parser.hpp"
#include "prime/policy.hpp"

namespace prime {

struct Ablations {
  bool no_pretrain = true;
  bool greedy_parse = true;
  bool no_augment = false;
};

struct ExperimentConfig {
  std::string task = "PickPlaceLite";
  std::uint64_t seed = 0;
  int demos = 30;
  double demo_noise = 0.1;
  int seeds = 3;
  int eval_episodes = 50;
  int max_prims = 8;
  double holdout = 0.1;
  int workers = 1;
  CollectorConfig collector;
  IdmConfig idm;
  ParseConfig parse;
  PolicyConfig policy;
  BcConfig bc;
  Ablations ablations;

  ExperimentConfig();
  void validate() const;  // ConfigError
  Json to_json() const;
  // Missing keys keep their defaults; unknown keys are rejected.
  static ExperimentConfig from_json(const Json& j);
  static ExperimentConfig load(const std::string& path);
};

Json collector_config_to_json(const CollectorConfig& c);
CollectorConfig collector_config_from_json(const Json& j, CollectorConfig defaults = {});

// Stage seeds are derived from the experiment seed so that one number pins
// the whole run.
enum class StageSeed : std::uint64_t {
  kCollect = 1,
  kDemos = 2,
  kIdm = 3,
  kSplit = 4,
  kPolicy = 5,
  kEval = 6,
  kBc = 7,
};
std::uint64_t stage_seed(std::uint64_t seed, StageSeed stage, std::uint64_t index = 0);

// One evaluated policy (or the BC baseline) on one seed.
struct PolicyRow {
  std::string variant;  // full, no_pretrain, greedy_parse, no_augment, flat_bc
  int seed = 0;
  double success_rate = 0.0;
  double mean_primitives = 0.0;  // motor steps for flat_bc
  int failed_grasps = 0;
  int grasp_retries = 0;
  int grasp_retries_adjusted = 0;
};

struct ParseRow {
  std::string method;  // dp, greedy
  double replay_success = 0.0;
  double mean_seq_len = 0.0;
  double mean_demo_len = 0.0;
  std::size_t other_segments = 0;
  double compression() const { return mean_demo_len > 0 ? mean_seq_len / mean_demo_len : 0.0; }
};

struct MetricsReport {
  std::string task;
  double idm_holdout_accuracy = 0.0;
  std::size_t dataset_size = 0;
  double augment_disagreement = 0.0;
  std::vector<ParseRow> parses;
  std::vector<PolicyRow> rows;
  std::map<std::string, double> timings;  // seconds per stage; never in metrics.csv

  std::vector<std::string> variants() const;  // first-appearance order
  std::vector<double> success_by_seed(const std::string& variant) const;
  const ParseRow* parse(const std::string& method) const;
};

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single value
};
Aggregate aggregate(const std::vector<double>& v);

// Runs every stage into run_dir (created if needed). A run directory that
// already has a manifest must list the same input checksums.
MetricsReport run_pipeline(const ExperimentConfig& cfg, const std::string& run_dir,
                           const std::string& config_path = "");

// metrics.csv (long format: section,name,seed,metric,value), timings.csv and
// plots/*.csv. Throws IoError.
void write_report(const MetricsReport& report, const std::string& dir);
MetricsReport read_report(const std::string& dir);
std::string format_report(const MetricsReport& report);  // human-readable table

struct ManifestEntry {
  std::string path;  // relative to the run directory, or absolute for external inputs
  std::string role;  // input | output
  std::string crc32;
  std::uintmax_t bytes = 0;
};

void write_manifest(const std::string& run_dir, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& run_dir);
ManifestEntry manifest_entry(const std::string& run_dir, const std::string& path, const std::string& role);
// Paths whose current checksum differs from the manifest (missing files included).
std::vector<std::string> verify_manifest(const std::string& run_dir);

}  // namespace prime
