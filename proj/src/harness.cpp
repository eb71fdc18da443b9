#include "prime/harness.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>

#include "prime/demos.hpp"
#include "prime/errors.hpp"

namespace fs = std::filesystem;

namespace prime {

// Config ------------------------------------------------------------------------

Json collector_config_to_json(const CollectorConfig& c) {
  return {{"episodes", c.episodes},
          {"horizon", c.horizon},
          {"negatives", c.negatives},
          {"primitive_prob", c.primitive_prob},
          {"prior", to_string(c.prior)}};
}

CollectorConfig collector_config_from_json(const Json& j, CollectorConfig c) {
  c.episodes = j.value("episodes", c.episodes);
  c.horizon = j.value("horizon", c.horizon);
  c.negatives = j.value("negatives", c.negatives);
  c.primitive_prob = j.value("primitive_prob", c.primitive_prob);
  if (j.contains("prior")) c.prior = sampling_mode_from_string(j.at("prior").get<std::string>());
  c.validate();
  return c;
}

ExperimentConfig::ExperimentConfig() {
  // Two negatives per episode over more episodes: see the collector notes in
  // the README for the accuracy trade-off.
  collector.episodes = 20000;
  collector.horizon = 15;
  collector.negatives = 2;
}

void ExperimentConfig::validate() const {
  if (task.empty()) throw ConfigError("task must be set");
  if (demos < 1) throw ConfigError("demos must be >= 1");
  if (seeds < 1) throw ConfigError("seeds must be >= 1");
  if (eval_episodes < 1) throw ConfigError("eval_episodes must be >= 1");
  if (max_prims < 1) throw ConfigError("max_prims must be >= 1");
  if (!(demo_noise >= 0) || demo_noise > 1) throw ConfigError("demo_noise must lie in [0, 1]");
  if (!(holdout > 0 && holdout < 1)) throw ConfigError("holdout must lie in (0, 1)");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  collector.validate();
  idm.validate();
  parse.validate();
  policy.validate();
  bc.validate();
}

Json ExperimentConfig::to_json() const {
  return {{"task", task},
          {"seed", seed},
          {"demos", demos},
          {"demo_noise", demo_noise},
          {"seeds", seeds},
          {"eval_episodes", eval_episodes},
          {"max_prims", max_prims},
          {"holdout", holdout},
          {"workers", workers},
          {"collector", collector_config_to_json(collector)},
          {"idm", idm.to_json()},
          {"parse", parse.to_json()},
          {"policy", policy.to_json()},
          {"bc", bc.to_json()},
          {"ablations",
           {{"no_pretrain", ablations.no_pretrain},
            {"greedy_parse", ablations.greedy_parse},
            {"no_augment", ablations.no_augment}}}};
}

ExperimentConfig ExperimentConfig::from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  static const std::set<std::string> known = {"task",     "seed",      "demos", "demo_noise", "seeds",
                                              "eval_episodes", "max_prims", "holdout", "workers",   "collector",
                                              "idm",      "parse",     "policy", "bc",        "ablations",
                                              "resolved_task"};  // written by run_pipeline, ignored
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ConfigError("unknown config key: " + k);
  ExperimentConfig c;
  try {
    c.task = j.value("task", c.task);
    c.seed = j.value("seed", c.seed);
    c.demos = j.value("demos", c.demos);
    c.demo_noise = j.value("demo_noise", c.demo_noise);
    c.seeds = j.value("seeds", c.seeds);
    c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
    c.max_prims = j.value("max_prims", c.max_prims);
    c.holdout = j.value("holdout", c.holdout);
    c.workers = j.value("workers", c.workers);
    if (j.contains("collector")) c.collector = collector_config_from_json(j.at("collector"), c.collector);
    if (j.contains("idm")) c.idm = IdmConfig::from_json(j.at("idm"));
    if (j.contains("parse")) c.parse = ParseConfig::from_json(j.at("parse"));
    if (j.contains("policy")) c.policy = PolicyConfig::from_json(j.at("policy"));
    if (j.contains("bc")) c.bc = BcConfig::from_json(j.at("bc"));
    if (j.contains("ablations")) {
      const Json& a = j.at("ablations");
      c.ablations.no_pretrain = a.value("no_pretrain", c.ablations.no_pretrain);
      c.ablations.greedy_parse = a.value("greedy_parse", c.ablations.greedy_parse);
      c.ablations.no_augment = a.value("no_augment", c.ablations.no_augment);
    }
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  } catch (const PreconditionError& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return from_json(j);
}

std::uint64_t stage_seed(std::uint64_t seed, StageSeed stage, std::uint64_t index) {
  return derive_key({seed, static_cast<std::uint64_t>(stage), index});
}

// Manifest -----------------------------------------------------------------------

namespace {

constexpr const char* kManifest = "manifest.json";

std::string resolve(const std::string& run_dir, const std::string& path) {
  return fs::path(path).is_absolute() ? path : (fs::path(run_dir) / path).string();
}

}  // namespace

ManifestEntry manifest_entry(const std::string& run_dir, const std::string& path, const std::string& role) {
  const std::string full = resolve(run_dir, path);
  return {path, role, hex32(crc32_of_file(full)), fs::file_size(full)};
}

void write_manifest(const std::string& run_dir, const std::vector<ManifestEntry>& entries) {
  Json files = Json::array();
  for (const auto& e : entries)
    files.push_back({{"path", e.path}, {"role", e.role}, {"crc32", e.crc32}, {"bytes", e.bytes}});
  const std::string path = (fs::path(run_dir) / kManifest).string();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << Json{{"files", files}}.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

std::vector<ManifestEntry> read_manifest(const std::string& run_dir) {
  const std::string path = (fs::path(run_dir) / kManifest).string();
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<ManifestEntry> out;
  try {
    const Json j = Json::parse(in);
    for (const auto& f : j.at("files"))
      out.push_back({f.at("path").get<std::string>(), f.at("role").get<std::string>(),
                     f.at("crc32").get<std::string>(), f.at("bytes").get<std::uintmax_t>()});
  } catch (const Json::exception& e) {
    throw CorruptFile(path + ": " + e.what());
  }
  return out;
}

std::vector<std::string> verify_manifest(const std::string& run_dir) {
  std::vector<std::string> bad;
  for (const auto& e : read_manifest(run_dir)) {
    const std::string full = resolve(run_dir, e.path);
    if (!fs::exists(full) || hex32(crc32_of_file(full)) != e.crc32) bad.push_back(e.path);
  }
  return bad;
}

// Pipeline -----------------------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

class Stage {
 public:
  Stage(MetricsReport& r, std::string name) : report_(r), name_(std::move(name)), start_(Clock::now()) {}
  ~Stage() { report_.timings[name_] += std::chrono::duration<double>(Clock::now() - start_).count(); }

 private:
  MetricsReport& report_;
  std::string name_;
  Clock::time_point start_;
};

// Module errors keep their type; the message gains the stage name.
template <class Fn>
auto run_stage(MetricsReport& r, const std::string& name, Fn&& fn) {
  Stage timer(r, name);
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(name + ": " + e.what());
  } catch (const Diverged& e) {
    throw Diverged(name + ": " + e.what());
  } catch (const PreconditionError& e) {
    throw PreconditionError(name + ": " + e.what());
  } catch (const Error& e) {
    throw Error(name + ": " + e.what());
  }
}

struct Parsed {
  std::vector<ParsedSequence> sequences;
  std::vector<PolicyTuple> segment_tuples;
  std::vector<PolicyTuple> augmented;
  AugmentStats stats;
};

Parsed parse_all(const std::vector<Demonstration>& demos, const IdmModels& models, const TaskSpec& task,
                 const ParseConfig& pc, ParseMethod method, ParseRow& row) {
  Parsed out;
  const std::size_t roster = task.objects.size();
  std::size_t ok = 0;
  double seq = 0, len = 0;
  for (const auto& d : demos) {
    ParsedSequence p = parse_demo(d, models, roster, pc, method);
    ok += replay(p, d, task).success;
    seq += static_cast<double>(p.segments.size());
    len += static_cast<double>(d.length());
    row.other_segments += p.other_count();
    auto t = parsed_tuples(p, d, roster);
    out.segment_tuples.insert(out.segment_tuples.end(), t.begin(), t.end());
    auto a = augment_stepwise(p, d, models, roster, &out.stats);
    out.augmented.insert(out.augmented.end(), a.begin(), a.end());
    out.sequences.push_back(std::move(p));
  }
  const double n = static_cast<double>(demos.size());
  row.replay_success = static_cast<double>(ok) / n;
  row.mean_seq_len = seq / n;
  row.mean_demo_len = len / n;
  return out;
}

std::vector<PolicyTuple> tuples_for(const Parsed& p, bool augment) {
  std::vector<PolicyTuple> out = p.segment_tuples;
  if (augment) out.insert(out.end(), p.augmented.begin(), p.augmented.end());
  return out;
}

PolicyRow to_row(const std::string& variant, int seed, const EvalSummary& e) {
  return {variant, seed, e.success_rate, e.mean_primitives, e.failed_grasps, e.grasp_retries,
          e.grasp_retries_adjusted};
}

bool is_builtin_task(const std::string& name) { return name == "PickPlaceLite" || name == "TidyUpLite"; }

}  // namespace

MetricsReport run_pipeline(const ExperimentConfig& cfg, const std::string& run_dir, const std::string& config_path) {
  cfg.validate();
  MetricsReport report;
  const TaskSpec task = resolve_task(cfg.task);
  report.task = task.name;

  for (const char* sub : {"data", "models", "parsed", "policies", "plots"}) fs::create_directories(fs::path(run_dir) / sub);

  std::vector<ManifestEntry> inputs;
  if (!config_path.empty()) inputs.push_back(manifest_entry(run_dir, fs::absolute(config_path).string(), "input"));
  if (!is_builtin_task(cfg.task)) inputs.push_back(manifest_entry(run_dir, fs::absolute(cfg.task).string(), "input"));
  if (fs::exists(fs::path(run_dir) / kManifest)) {
    for (const auto& old : read_manifest(run_dir)) {
      if (old.role != "input") continue;
      const auto it = std::find_if(inputs.begin(), inputs.end(), [&](const ManifestEntry& e) { return e.path == old.path; });
      if (it == inputs.end() || it->crc32 != old.crc32)
        throw PreconditionError("input " + old.path + " changed since the previous run in " + run_dir);
    }
  }

  auto out_path = [&](const std::string& rel) { return (fs::path(run_dir) / rel).string(); };
  std::vector<std::string> outputs;
  auto wrote = [&](const std::string& rel) { outputs.push_back(rel); };

  {
    std::ofstream out(out_path("config.json"));
    if (!out) throw IoError("cannot write " + out_path("config.json"));
    Json resolved = cfg.to_json();
    resolved["resolved_task"] = task.name;
    out << resolved.dump(2) << "\n";
    wrote("config.json");
  }

  const IdmDataset data = run_stage(report, "collect", [&] {
    CollectorConfig cc = cfg.collector;
    cc.seed = stage_seed(cfg.seed, StageSeed::kCollect);
    cc.workers = cfg.workers;
    IdmDataset d = collect_dataset(task, cc);
    save_dataset(d, out_path("data/idm_dataset.jsonl"));
    return d;
  });
  wrote("data/idm_dataset.jsonl");
  wrote("data/idm_dataset.jsonl.audit");
  report.dataset_size = data.samples.size();

  const IdmModels models = run_stage(report, "train-idm", [&] {
    auto [train, hold] = split_holdout(data, cfg.holdout, stage_seed(cfg.seed, StageSeed::kSplit));
    IdmConfig ic = cfg.idm;
    ic.classifier.seed = stage_seed(cfg.seed, StageSeed::kIdm, 0);
    ic.param.seed = stage_seed(cfg.seed, StageSeed::kIdm, 1);
    ic.workers = cfg.workers;
    IdmModels m = train_idm(train, ic);
    report.idm_holdout_accuracy = evaluate_classifier(m.classifier, hold).accuracy;
    save_model(m, out_path("models/idm.jsonl"));
    return m;
  });
  wrote("models/idm.jsonl");

  const std::vector<Demonstration> demos = run_stage(report, "collect-demos", [&] {
    auto d = script_demos(task, stage_seed(cfg.seed, StageSeed::kDemos), cfg.demos, cfg.demo_noise, cfg.workers);
    save_demos(d, out_path("data/demos.jsonl"));
    return d;
  });
  wrote("data/demos.jsonl");

  ParseConfig pc = cfg.parse;
  pc.workers = cfg.workers;
  ParseRow dp_row{"dp"};
  const Parsed dp = run_stage(report, "parse", [&] {
    Parsed p = parse_all(demos, models, task, pc, ParseMethod::kDp, dp_row);
    save_parsed(p.sequences, out_path("parsed/dp.jsonl"));
    return p;
  });
  wrote("parsed/dp.jsonl");
  report.parses.push_back(dp_row);
  report.augment_disagreement =
      dp.stats.tuples ? static_cast<double>(dp.stats.disagreements) / static_cast<double>(dp.stats.tuples) : 0.0;

  Parsed greedy;
  if (cfg.ablations.greedy_parse) {
    ParseRow row{"greedy"};
    greedy = run_stage(report, "parse-greedy", [&] {
      Parsed p = parse_all(demos, models, task, pc, ParseMethod::kGreedy, row);
      save_parsed(p.sequences, out_path("parsed/greedy.jsonl"));
      return p;
    });
    wrote("parsed/greedy.jsonl");
    report.parses.push_back(row);
  }

  for (int k = 0; k < cfg.seeds; ++k) {
    const auto ks = static_cast<std::uint64_t>(k);
    PolicyConfig pcfg = cfg.policy;
    pcfg.pretrain.seed = stage_seed(cfg.seed, StageSeed::kPolicy, 2 * ks);
    pcfg.finetune.seed = stage_seed(cfg.seed, StageSeed::kPolicy, 2 * ks + 1);
    pcfg.workers = cfg.workers;
    const std::uint64_t eval_base = stage_seed(cfg.seed, StageSeed::kEval, ks);
    const std::string suffix = "_seed" + std::to_string(k) + ".jsonl";

    PolicyBundle pre;
    if (cfg.policy.use_pretrain) pre = run_stage(report, "pretrain", [&] { return pretrain_policy(data, pcfg); });

    auto variant = [&](const std::string& name, bool use_pre, const Parsed& parsed, bool augment) {
      const PolicyBundle pol = run_stage(report, "train-policy", [&] {
        return finetune_policy(use_pre ? &pre : nullptr, tuples_for(parsed, augment), task.name, data.feature_dim,
                               pcfg);
      });
      save_policy(pol, out_path("policies/" + name + suffix));
      wrote("policies/" + name + suffix);
      const EvalSummary e = run_stage(report, "eval", [&] {
        return evaluate_policy(pol, task, eval_base, cfg.eval_episodes, cfg.max_prims, cfg.workers);
      });
      report.rows.push_back(to_row(name, k, e));
    };

    variant("full", cfg.policy.use_pretrain, dp, cfg.policy.augment);
    if (cfg.ablations.no_pretrain) variant("no_pretrain", false, dp, cfg.policy.augment);
    if (cfg.ablations.greedy_parse) variant("greedy_parse", cfg.policy.use_pretrain, greedy, cfg.policy.augment);
    if (cfg.ablations.no_augment) variant("no_augment", cfg.policy.use_pretrain, dp, false);

    BcConfig bcfg = cfg.bc;
    bcfg.train.seed = stage_seed(cfg.seed, StageSeed::kBc, ks);
    const FlatBcPolicy bc = run_stage(report, "train-bc", [&] {
      return train_bc_baseline(demos, task.objects.size(), bcfg);
    });
    save_bc(bc, out_path("policies/flat_bc" + suffix));
    wrote("policies/flat_bc" + suffix);
    const EvalSummary e = run_stage(report, "eval-bc", [&] {
      return evaluate_bc(bc, task, eval_base, cfg.eval_episodes, cfg.bc.max_steps, cfg.workers);
    });
    report.rows.push_back(to_row("flat_bc", k, e));
  }

  write_report(report, run_dir);
  for (const auto& entry : fs::recursive_directory_iterator(run_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), run_dir).string();
    if (rel.rfind("plots/", 0) == 0 || rel == "metrics.csv" || rel == "timings.csv") wrote(rel);
  }
  std::sort(outputs.begin(), outputs.end());
  outputs.erase(std::unique(outputs.begin(), outputs.end()), outputs.end());
  std::vector<ManifestEntry> entries = inputs;
  for (const auto& rel : outputs) entries.push_back(manifest_entry(run_dir, rel, "output"));
  write_manifest(run_dir, entries);
  return report;
}

}  // namespace prime
