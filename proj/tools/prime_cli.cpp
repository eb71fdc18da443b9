// prime: command-line driver for every pipeline stage.
//
//   prime run-all --config configs/pickplace.json --run-dir runs/pp
//   prime report --run-dir runs/pp
//
// Exit codes: 0 success, 1 stage failure, 2 configuration error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "prime/errors.hpp"
#include "prime/harness.hpp"

using namespace prime;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> task;
};

ExperimentConfig load_config(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : ExperimentConfig::load(c.config);
  if (c.workers) cfg.workers = *c.workers;
  if (c.seed) cfg.seed = *c.seed;
  if (c.task) cfg.task = *c.task;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* app, Common& c, bool with_task = true) {
  app->add_option("--config", c.config, "experiment config JSON")->check(CLI::ExistingFile);
  app->add_option("--workers", c.workers, "worker threads");
  app->add_option("--seed", c.seed, "seed");
  if (with_task) app->add_option("--task", c.task, "PickPlaceLite, TidyUpLite or a task JSON path");
}

void write_json(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PRIME pipeline: primitive collection, IDM training, demo parsing, imitation"};
  app.require_subcommand(1);

  // collect
  Common collect_c;
  std::string collect_out;
  std::optional<int> episodes, horizon, negatives;
  std::optional<std::string> prior;
  auto* collect = app.add_subcommand("collect", "self-supervised primitive data collection");
  add_common(collect, collect_c);
  collect->add_option("--episodes", episodes);
  collect->add_option("--horizon", horizon);
  collect->add_option("--negatives", negatives);
  collect->add_option("--prior", prior)->check(CLI::IsMember({"uniform", "object_prior"}));
  collect->add_option("--out", collect_out)->required();

  // collect-demos
  Common demos_c;
  std::string demos_out;
  std::optional<int> demo_count;
  std::optional<double> noise;
  auto* cdemos = app.add_subcommand("collect-demos", "scripted low-level demonstrations");
  add_common(cdemos, demos_c);
  cdemos->add_option("--count", demo_count);
  cdemos->add_option("--noise", noise);
  cdemos->add_option("--out", demos_out)->required();

  // train-idm
  Common idm_c;
  std::string idm_data, idm_out;
  std::optional<int> idm_epochs;
  auto* tidm = app.add_subcommand("train-idm", "train the inverse dynamics model");
  add_common(tidm, idm_c, false);
  tidm->add_option("--data", idm_data)->required()->check(CLI::ExistingFile);
  tidm->add_option("--epochs", idm_epochs, "classifier epochs");
  tidm->add_option("--out", idm_out)->required();

  // parse
  Common parse_c;
  std::string parse_demos, parse_model, parse_out, parse_method = "dp";
  std::optional<double> alpha;
  std::optional<int> stride;
  auto* parse = app.add_subcommand("parse", "segment demonstrations into primitive sequences");
  add_common(parse, parse_c, false);
  parse->add_option("--demos", parse_demos)->required()->check(CLI::ExistingFile);
  parse->add_option("--model", parse_model)->required()->check(CLI::ExistingFile);
  parse->add_option("--alpha", alpha);
  parse->add_option("--stride", stride);
  parse->add_option("--method", parse_method)->check(CLI::IsMember({"dp", "greedy", "bruteforce"}));
  parse->add_option("--out", parse_out)->required();

  // replay
  Common replay_c;
  std::string replay_parsed, replay_demos, replay_report;
  auto* rep = app.add_subcommand("replay", "execute parsed sequences from each demo's initial state");
  add_common(rep, replay_c);
  rep->add_option("--parsed", replay_parsed)->required()->check(CLI::ExistingFile);
  rep->add_option("--demos", replay_demos)->required()->check(CLI::ExistingFile);
  rep->add_option("--report", replay_report, "JSON summary path");

  // train-policy
  Common pol_c;
  std::string pol_parsed, pol_demos, pol_data, pol_model, pol_out;
  bool pretrain = true, augment = true;
  auto* tpol = app.add_subcommand("train-policy", "train the two-level policy");
  add_common(tpol, pol_c);
  tpol->add_option("--parsed", pol_parsed)->required()->check(CLI::ExistingFile);
  tpol->add_option("--demos", pol_demos)->required()->check(CLI::ExistingFile);
  tpol->add_option("--idm-data", pol_data, "collector dataset for pretraining")->check(CLI::ExistingFile);
  tpol->add_option("--model", pol_model, "IDM checkpoint for stepwise augmentation")->check(CLI::ExistingFile);
  tpol->add_flag("--pretrain,!--no-pretrain", pretrain);
  tpol->add_flag("--augment,!--no-augment", augment);
  tpol->add_option("--out", pol_out)->required();

  // train-bc
  Common bc_c;
  std::string bc_demos, bc_out;
  auto* tbc = app.add_subcommand("train-bc", "train the flat behavioral-cloning baseline");
  add_common(tbc, bc_c);
  tbc->add_option("--demos", bc_demos)->required()->check(CLI::ExistingFile);
  tbc->add_option("--out", bc_out)->required();

  // eval
  Common eval_c;
  std::string eval_policy;
  std::optional<int> eval_episodes, max_prims;
  bool eval_bc = false, eval_sample = false;
  auto* ev = app.add_subcommand("eval", "roll out a trained policy");
  add_common(ev, eval_c);
  ev->add_option("--policy", eval_policy)->required()->check(CLI::ExistingFile);
  ev->add_option("--episodes", eval_episodes);
  ev->add_option("--max-prims", max_prims);
  ev->add_flag("--bc", eval_bc, "the checkpoint is a flat BC policy");
  ev->add_flag("--sample", eval_sample, "sample types and parameters instead of taking modes");

  // run-all / ablate
  Common run_c, abl_c;
  std::string run_dir, abl_dir;
  auto* run = app.add_subcommand("run-all", "full pipeline into a run directory");
  add_common(run, run_c);
  run->add_option("--run-dir", run_dir)->required();
  auto* abl = app.add_subcommand("ablate", "full pipeline with every ablation variant");
  add_common(abl, abl_c);
  abl->add_option("--run-dir", abl_dir)->required();

  // report
  std::string report_dir;
  bool report_noverify = false;
  auto* rpt = app.add_subcommand("report", "print a run's metrics after checking its manifest");
  rpt->add_option("--run-dir", report_dir)->required()->check(CLI::ExistingDirectory);
  rpt->add_flag("--no-verify", report_noverify);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*collect) {
      ExperimentConfig cfg = load_config(collect_c);
      CollectorConfig cc = cfg.collector;
      if (episodes) cc.episodes = *episodes;
      if (horizon) cc.horizon = *horizon;
      if (negatives) cc.negatives = *negatives;
      if (prior) cc.prior = sampling_mode_from_string(*prior);
      cc.seed = cfg.seed;
      cc.workers = cfg.workers;
      const TaskSpec task = resolve_task(cfg.task);
      const IdmDataset data = collect_dataset(task, cc);
      save_dataset(data, collect_out);
      std::cout << dataset_summary(data) << "\n";
    } else if (*cdemos) {
      ExperimentConfig cfg = load_config(demos_c);
      const TaskSpec task = resolve_task(cfg.task);
      const auto demos = script_demos(task, cfg.seed, demo_count.value_or(cfg.demos), noise.value_or(cfg.demo_noise),
                                      cfg.workers);
      save_demos(demos, demos_out);
      double len = 0;
      for (const auto& d : demos) len += static_cast<double>(d.length());
      std::printf("%zu demos, mean length %.1f\n", demos.size(), len / static_cast<double>(demos.size()));
    } else if (*tidm) {
      ExperimentConfig cfg = load_config(idm_c);
      IdmConfig ic = cfg.idm;
      if (idm_epochs) ic.classifier.epochs = *idm_epochs;
      ic.classifier.seed = stage_seed(cfg.seed, StageSeed::kIdm, 0);
      ic.param.seed = stage_seed(cfg.seed, StageSeed::kIdm, 1);
      ic.workers = cfg.workers;
      ic.validate();
      const IdmDataset data = load_dataset(idm_data);
      auto [train, hold] = split_holdout(data, cfg.holdout, stage_seed(cfg.seed, StageSeed::kSplit));
      const IdmModels m = train_idm(train, ic);
      save_model(m, idm_out);
      std::printf("held-out type accuracy %.4f on %zu samples\n", evaluate_classifier(m.classifier, hold).accuracy,
                  hold.samples.size());
    } else if (*parse) {
      ExperimentConfig cfg = load_config(parse_c);
      ParseConfig pc = cfg.parse;
      if (alpha) pc.alpha = *alpha;
      if (stride) pc.stride = *stride;
      pc.workers = cfg.workers;
      pc.validate();
      const auto demos = load_demos(parse_demos);
      const IdmModels models = load_model(parse_model);
      const TaskSpec task = resolve_task(models.task);
      const ParseMethod method = parse_method == "greedy"       ? ParseMethod::kGreedy
                                 : parse_method == "bruteforce" ? ParseMethod::kBruteForce
                                                                : ParseMethod::kDp;
      std::vector<ParsedSequence> out;
      for (const auto& d : demos) out.push_back(parse_demo(d, models, task.objects.size(), pc, method));
      save_parsed(out, parse_out);
      double seq = 0;
      for (const auto& p : out) seq += static_cast<double>(p.segments.size());
      std::printf("%zu demos parsed, mean sequence length %.2f\n", out.size(), seq / static_cast<double>(out.size()));
    } else if (*rep) {
      ExperimentConfig cfg = load_config(replay_c);
      const auto parsed = load_parsed(replay_parsed);
      const auto demos = load_demos(replay_demos);
      if (parsed.size() != demos.size()) throw PreconditionError("parsed and demo files differ in length");
      const TaskSpec task = resolve_task(demos.empty() ? cfg.task : demos.front().task);
      Json per = Json::array();
      std::size_t ok = 0, other = 0;
      double seq = 0, len = 0;
      for (std::size_t i = 0; i < demos.size(); ++i) {
        const ReplayResult r = replay(parsed[i], demos[i], task);
        ok += r.success;
        other += r.aborted_on_other;
        seq += static_cast<double>(parsed[i].segments.size());
        len += static_cast<double>(demos[i].length());
        per.push_back({{"demo", parsed[i].demo_id},
                       {"success", r.success},
                       {"executed", r.executed},
                       {"aborted_on_other", r.aborted_on_other},
                       {"timed_out", r.timed_out}});
      }
      const double n = static_cast<double>(std::max<std::size_t>(demos.size(), 1));
      const Json summary = {{"replay_success", static_cast<double>(ok) / n},
                            {"mean_seq_len", seq / n},
                            {"mean_demo_len", len / n},
                            {"aborted_on_other", other},
                            {"demos", per}};
      if (!replay_report.empty()) write_json(replay_report, summary);
      std::printf("replay success %.3f, seq/demo %.2f/%.1f, aborted on Other %zu\n", static_cast<double>(ok) / n,
                  seq / n, len / n, other);
    } else if (*tpol) {
      ExperimentConfig cfg = load_config(pol_c);
      PolicyConfig pc = cfg.policy;
      pc.use_pretrain = pretrain;
      pc.augment = augment;
      pc.pretrain.seed = stage_seed(cfg.seed, StageSeed::kPolicy, 0);
      pc.finetune.seed = stage_seed(cfg.seed, StageSeed::kPolicy, 1);
      pc.workers = cfg.workers;
      if (pretrain && pol_data.empty()) throw ConfigError("--pretrain needs --idm-data (or pass --no-pretrain)");
      if (augment && pol_model.empty()) throw ConfigError("--augment needs --model (or pass --no-augment)");
      const auto parsed = load_parsed(pol_parsed);
      const auto demos = load_demos(pol_demos);
      if (parsed.size() != demos.size() || demos.empty()) throw PreconditionError("parsed and demo files differ");
      const TaskSpec task = resolve_task(demos.front().task);
      const std::size_t roster = task.objects.size();
      std::optional<IdmModels> models;
      if (augment) models = load_model(pol_model);
      std::vector<PolicyTuple> tuples;
      AugmentStats stats;
      for (std::size_t i = 0; i < demos.size(); ++i) {
        auto t = parsed_tuples(parsed[i], demos[i], roster);
        tuples.insert(tuples.end(), t.begin(), t.end());
        if (augment) {
          auto a = augment_stepwise(parsed[i], demos[i], *models, roster, &stats);
          tuples.insert(tuples.end(), a.begin(), a.end());
        }
      }
      std::optional<PolicyBundle> pre;
      if (pretrain) pre = pretrain_policy(load_dataset(pol_data), pc);
      const PolicyBundle pol = finetune_policy(pre ? &*pre : nullptr, tuples, task.name, feature_dim(roster), pc);
      save_policy(pol, pol_out);
      std::printf("%zu tuples (%zu augmented, type disagreement %.3f)\n", tuples.size(), stats.tuples,
                  stats.tuples ? static_cast<double>(stats.disagreements) / static_cast<double>(stats.tuples) : 0.0);
    } else if (*tbc) {
      ExperimentConfig cfg = load_config(bc_c);
      BcConfig bcfg = cfg.bc;
      bcfg.train.seed = stage_seed(cfg.seed, StageSeed::kBc, 0);
      const auto demos = load_demos(bc_demos);
      if (demos.empty()) throw PreconditionError("no demonstrations");
      const TaskSpec task = resolve_task(demos.front().task);
      save_bc(train_bc_baseline(demos, task.objects.size(), bcfg), bc_out);
    } else if (*ev) {
      ExperimentConfig cfg = load_config(eval_c);
      const int n = eval_episodes.value_or(cfg.eval_episodes);
      EvalSummary e;
      if (eval_bc) {
        const FlatBcPolicy p = load_bc(eval_policy);
        e = evaluate_bc(p, resolve_task(eval_c.task ? cfg.task : p.task), cfg.seed, n, cfg.bc.max_steps, cfg.workers);
      } else {
        const PolicyBundle p = load_policy(eval_policy);
        e = evaluate_policy(p, resolve_task(eval_c.task ? cfg.task : p.task), cfg.seed, n,
                            max_prims.value_or(cfg.max_prims), cfg.workers,
                            eval_sample ? RolloutMode::kSample : RolloutMode::kModeSelect);
      }
      std::printf("success %.3f over %d episodes, mean %s %.2f\n", e.success_rate, e.episodes,
                  eval_bc ? "steps" : "primitives", e.mean_primitives);
      if (!eval_bc)
        std::printf("after a failed grasp: %d observed, %d retried Grasp, %d with new parameters\n", e.failed_grasps,
                    e.grasp_retries, e.grasp_retries_adjusted);
    } else if (*run || *abl) {
      const bool ablate = abl->parsed();
      ExperimentConfig cfg = load_config(ablate ? abl_c : run_c);
      if (ablate) cfg.ablations = {true, true, true};
      const std::string& dir = ablate ? abl_dir : run_dir;
      const MetricsReport r = run_pipeline(cfg, dir, ablate ? abl_c.config : run_c.config);
      std::cout << format_report(r);
    } else if (*rpt) {
      if (!report_noverify) {
        const auto bad = verify_manifest(report_dir);
        if (!bad.empty()) {
          for (const auto& b : bad) std::cerr << "checksum mismatch: " << b << "\n";
          return 1;
        }
      }
      std::cout << format_report(read_report(report_dir));
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
