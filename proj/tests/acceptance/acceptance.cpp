// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "prime/errors.hpp"
#include "prime/harness.hpp"
#include "prime/verify.hpp"

using namespace prime;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr int kRandomTables = 200;
constexpr std::size_t kRandomMaxBoundaries = 10;
constexpr int kRealTables = 50;
constexpr double kParseSeconds = 60.0;
constexpr int kGradInstances = 20;
constexpr double kGradTolerance = 1e-4;
constexpr double kGradSeconds = 60.0;
constexpr double kPickReplay = 0.90;
constexpr double kPickSeqLen = 6.0;
constexpr double kPickDemoLen = 100.0;
constexpr double kPipelineSeconds = 1800.0;
constexpr double kTidyReplay = 0.80;
constexpr double kTidySeqLen = 10.0;
constexpr double kAdvantage = 0.10;
constexpr int kCollectorEpisodes = 1000;
constexpr int kCollectorNegatives = 10;
constexpr double kMassTolerance = 1e-9;
constexpr double kIdmAccuracy = 0.9;

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};
std::map<int, Verdict> verdicts;

void record(int id, bool pass, const std::string& detail) {
  verdicts[id] = {pass, detail};
  std::printf("[criterion %d] %s: %s\n", id, pass ? "pass" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

double mean(const std::vector<double>& v) { return aggregate(v).mean; }

// Criterion 1 -------------------------------------------------------------------

struct ParseCheck {
  int tables = 0;
  int mismatches = 0;
  double seconds = 0.0;
};

void compare_parsers(const PairScoreTable& t, double alpha, ParseCheck& c) {
  const auto t0 = Clock::now();
  const auto dp = parse_dp(t, alpha);
  const auto bf = parse_bruteforce(t, alpha);
  c.seconds += seconds_since(t0);
  ++c.tables;
  if (!(dp.total_log_score == bf.total_log_score && dp.segments == bf.segments)) ++c.mismatches;
}

ParseCheck random_tables() {
  ParseCheck c;
  Rng rng(2024, Stream::kTest);
  verify::OracleOptions opt;
  opt.max_boundaries = kRandomMaxBoundaries;
  for (int i = 0; i < kRandomTables; ++i) {
    opt.quantum = i % 4 == 0 ? 0.5 : 0.0;  // every fourth table is tie-heavy
    compare_parsers(verify::random_score_table(rng, opt), 1e-4, c);
  }
  return c;
}

void real_tables(const std::vector<Demonstration>& demos, const IdmModels& models, std::size_t roster, int count,
                 double alpha, ParseCheck& c) {
  for (int i = 0; i < count && i < static_cast<int>(demos.size()); ++i) {
    const auto T = static_cast<std::int64_t>(demos[i].length());
    const auto max_segments = static_cast<std::int64_t>(kMaxBruteForceBoundaries) - 1;
    ParseConfig pc;
    pc.alpha = alpha;
    pc.stride = static_cast<int>((T + max_segments - 1) / max_segments);
    const auto table = score_demo(demos[i], models, roster, pc);
    compare_parsers(table, alpha, c);
  }
}

// Criterion 2 -------------------------------------------------------------------

struct GradCheck {
  int instances = 0;
  double worst = 0.0;
  std::string worst_name;
};

// Real input and output shapes with small hidden layers.
constexpr int kGradWidth = 8;
std::vector<int> small_sizes(std::vector<int> sizes) {
  for (std::size_t k = 1; k + 1 < sizes.size(); ++k) sizes[k] = kGradWidth;
  return sizes;
}

nn::Matrix sample_columns(const std::vector<const std::vector<double>*>& rows, int dim, Rng& rng, int count) {
  nn::Matrix m(dim, count);
  for (int c = 0; c < count; ++c) {
    const auto& r = *rows[rng.index(rows.size())];
    for (int k = 0; k < dim; ++k) m(k, c) = r[static_cast<std::size_t>(k)];
  }
  return m;
}

void check(GradCheck& g, const std::string& name, const std::function<double(const nn::Vector&, nn::Vector*)>& f,
           const nn::Vector& p) {
  const double e = verify::gradient_check(f, p);
  ++g.instances;
  if (!(e <= g.worst) || !std::isfinite(e)) {
    g.worst = std::isfinite(e) ? e : INFINITY;
    g.worst_name = name;
  }
}

GradCheck gradient_checks(const IdmDataset& data, const IdmModels& models, const PolicyBundle& policy) {
  GradCheck g;
  constexpr int kBatch = 3;
  Rng rng(77, Stream::kTest);
  const int d = data.feature_dim;

  std::vector<IdmSample> pool(data.samples.begin(), data.samples.begin() + std::min<std::size_t>(4000, data.samples.size()));
  const nn::Matrix pairs = pair_inputs(pool);
  auto pick = [&](auto pred) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (pred(pool[i])) idx.push_back(i);
    return idx;
  };

  const auto any = pick([](const IdmSample&) { return true; });
  for (int i = 0; i < kGradInstances; ++i) {
    Rng init(1000 + i, Stream::kTest);
    const auto sizes = small_sizes(models.classifier.net.sizes());
    const nn::Mlp net(sizes, init);
    std::vector<std::size_t> cols;
    std::vector<int> labels;
    std::vector<double> w;
    for (int b = 0; b < kBatch; ++b) {
      const auto j = any[rng.index(any.size())];
      cols.push_back(j);
      labels.push_back(class_index(pool[j].p));
      w.push_back(pool[j].weight);
    }
    const nn::Matrix x = models.classifier.norm.apply(nn::gather_columns(pairs, cols));
    check(g, "classifier", [&](const nn::Vector& p, nn::Vector* gr) {
      return nn::classification_objective(nn::Mlp(sizes, p), x, labels, w, models.classifier.present, gr);
    }, net.params());
  }

  for (auto type : kLibraryPrimitives) {
    const ParamModel& m = models.param(type);
    const auto idx = pick([&](const IdmSample& s) { return s.p == type; });
    for (int i = 0; i < kGradInstances; ++i) {
      Rng init(2000 + 100 * class_index(type) + i, Stream::kTest);
      const auto sizes = small_sizes(m.net.sizes());
      const nn::Mlp net(sizes, init);
      std::vector<std::size_t> cols;
      nn::Matrix y(m.spec.dim, kBatch);
      std::vector<double> w;
      for (int b = 0; b < kBatch; ++b) {
        const auto j = idx[rng.index(idx.size())];
        cols.push_back(j);
        for (int k = 0; k < m.spec.dim; ++k) y(k, b) = pool[j].x[static_cast<std::size_t>(k)];
        w.push_back(pool[j].weight);
      }
      const nn::Matrix x = m.norm.apply(nn::gather_columns(pairs, cols));
      check(g, std::string("idm ") + to_string(type), [&](const nn::Vector& p, nn::Vector* gr) {
        return nn::mixture_objective(nn::Mlp(sizes, p), x, y, w, m.spec, gr);
      }, net.params());
    }
  }

  std::vector<const std::vector<double>*> states;
  for (const auto& s : pool) states.push_back(&s.s);
  for (int i = 0; i < kGradInstances; ++i) {
    Rng init(3000 + i, Stream::kTest);
    const auto sizes = small_sizes(policy.prim.net.sizes());
    const nn::Mlp net(sizes, init);
    const nn::Matrix s = policy.prim.norm.apply(sample_columns(states, d, rng, kBatch));
    std::vector<int> labels;
    for (int b = 0; b < kBatch; ++b) {
      int k;
      do k = static_cast<int>(rng.index(kNumClasses));
      while (!policy.prim.allowed[k]);
      labels.push_back(k);
    }
    const std::vector<double> w(kBatch, 1.0);
    check(g, "policy type", [&](const nn::Vector& p, nn::Vector* gr) {
      return nn::classification_objective(nn::Mlp(sizes, p), s, labels, w, policy.prim.allowed, gr);
    }, net.params());
  }
  for (auto type : kLibraryPrimitives) {
    const ParamModel& m = policy.params[class_index(type)];
    if (!m.trained) continue;
    const auto idx = pick([&](const IdmSample& s) { return s.p == type; });
    for (int i = 0; i < kGradInstances; ++i) {
      Rng init(4000 + 100 * class_index(type) + i, Stream::kTest);
      const auto sizes = small_sizes(m.net.sizes());
      const nn::Mlp net(sizes, init);
      nn::Matrix raw(d, kBatch), y(m.spec.dim, kBatch);
      for (int b = 0; b < kBatch; ++b) {
        const auto& smp = pool[idx[rng.index(idx.size())]];
        for (int k = 0; k < d; ++k) raw(k, b) = smp.s[static_cast<std::size_t>(k)];
        for (int k = 0; k < m.spec.dim; ++k) y(k, b) = smp.x[static_cast<std::size_t>(k)];
      }
      const nn::Matrix x = m.norm.apply(raw);
      const std::vector<double> w(kBatch, 1.0);
      check(g, std::string("policy ") + to_string(type), [&](const nn::Vector& p, nn::Vector* gr) {
        return nn::mixture_objective(nn::Mlp(sizes, p), x, y, w, m.spec, gr);
      }, net.params());
    }
  }
  return g;
}

// Criteria 4 and 9 (TidyUpLite) ---------------------------------------------------

struct TidyResult {
  double replay = 0.0;
  double seq_len = 0.0;
  double demo_len = 0.0;
  double idm_accuracy = 0.0;
  std::vector<Demonstration> demos;
  IdmModels models;
};

TidyResult tidy_up(const ExperimentConfig& cfg) {
  TidyResult r;
  const TaskSpec task = resolve_task(cfg.task);
  const std::size_t roster = task.objects.size();
  CollectorConfig cc = cfg.collector;
  cc.seed = stage_seed(cfg.seed, StageSeed::kCollect);
  cc.workers = cfg.workers;
  const IdmDataset data = collect_dataset(task, cc);
  const auto [train, test] = split_holdout(data, cfg.holdout, stage_seed(cfg.seed, StageSeed::kSplit));
  IdmConfig ic = cfg.idm;
  ic.classifier.seed = ic.param.seed = stage_seed(cfg.seed, StageSeed::kIdm);
  ic.workers = cfg.workers;
  r.models = train_idm(train, ic);
  r.idm_accuracy = evaluate_classifier(r.models.classifier, test).accuracy;
  r.demos = script_demos(task, stage_seed(cfg.seed, StageSeed::kDemos), cfg.demos, cfg.demo_noise, cfg.workers);
  int ok = 0;
  double seq = 0, len = 0;
  for (const auto& d : r.demos) {
    const auto p = parse_demo(d, r.models, roster, cfg.parse);
    ok += replay(p, d, task).success;
    seq += static_cast<double>(p.segments.size());
    len += static_cast<double>(d.length());
  }
  const double n = static_cast<double>(r.demos.size());
  r.replay = ok / n;
  r.seq_len = seq / n;
  r.demo_len = len / n;
  return r;
}

int run_cli(const std::string& cli, const std::string& args, const fs::path& log) {
  const std::string cmd = "\"" + cli + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  return std::system(cmd.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string work_dir = "acceptance_runs", cli, configs = "configs";
  app.add_option("--work-dir", work_dir);
  app.add_option("--cli", cli, "prime executable")->required();
  app.add_option("--configs", configs, "directory holding pickplace.json and tidyup.json");
  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path work(work_dir);
    fs::remove_all(work);
    fs::create_directories(work);
    const std::string pick_cfg = (fs::path(configs) / "pickplace.json").string();
    const std::string tidy_cfg = (fs::path(configs) / "tidyup.json").string();

    // 7: collector contract.
    {
      CollectorConfig cc;
      cc.episodes = kCollectorEpisodes;
      cc.negatives = kCollectorNegatives;
      cc.seed = 7;
      const IdmDataset data = collect_dataset(pick_place_lite(), cc);
      const auto audit = verify::audit_dataset(data);
      std::array<double, kNumClasses> mass{};
      for (const auto& s : data.samples) mass[class_index(s.p)] += s.weight;
      double worst = 0;
      for (int k = 0; k < kNumClasses; ++k)
        if (data.counts[k] > 0) worst = std::max(worst, std::abs(mass[k] - 1.0));
      const std::size_t expected = static_cast<std::size_t>(kCollectorEpisodes) * kCollectorNegatives;
      const bool ok = audit.failed_success == 0 && audit.failed_replay == 0 && audit.bad_negatives == 0 &&
                      data.count(PrimitiveType::kOther) == expected && worst <= kMassTolerance && audit.checked > 0;
      record(7, ok,
             fmt("%zu positives re-executed, %zu failed, %zu diverged; negatives %zu (expected %zu); "
                 "max |type mass - 1| %.3g",
                 audit.checked, audit.failed_success, audit.failed_replay, data.count(PrimitiveType::kOther), expected,
                 worst));
    }

    // 3, 5, 6, 9 (PickPlaceLite) and 8 from two run-all invocations.
    const fs::path run1 = work / "pickplace_run1", run2 = work / "pickplace_run2";
    const auto t_run = Clock::now();
    const int rc1 = run_cli(cli, "run-all --config \"" + pick_cfg + "\" --run-dir \"" + run1.string() + "\"",
                            work / "run1.log");
    const double run_seconds = seconds_since(t_run);
    if (rc1 != 0) throw Error("run-all failed; see " + (work / "run1.log").string());
    const MetricsReport rep = read_report(run1.string());
    std::printf("%s", format_report(rep).c_str());

    const ParseRow* dp = rep.parse("dp");
    if (!dp) throw Error("report has no dp parse row");
    record(3, dp->replay_success >= kPickReplay && dp->mean_seq_len <= kPickSeqLen && dp->mean_demo_len >= kPickDemoLen &&
                  run_seconds <= kPipelineSeconds,
           fmt("replay %.3f (>= %.2f), seq len %.2f (<= %.0f), demo len %.1f (>= %.0f), pipeline %.0f s (<= %.0f)",
               dp->replay_success, kPickReplay, dp->mean_seq_len, kPickSeqLen, dp->mean_demo_len, kPickDemoLen,
               run_seconds, kPipelineSeconds));

    {
      const auto full = rep.success_by_seed("full"), bc = rep.success_by_seed("flat_bc");
      bool every = full.size() == bc.size() && !full.empty();
      std::string per;
      for (std::size_t k = 0; k < full.size() && k < bc.size(); ++k) {
        every = every && full[k] > bc[k];
        per += fmt(" seed%zu %.2f/%.2f", k, full[k], bc[k]);
      }
      const double gap = mean(full) - mean(bc);
      record(5, gap >= kAdvantage - 1e-12 && every,
             fmt("PRIME %.3f vs flat BC %.3f, gap %.1f pp (>= %.0f); per seed PRIME/BC:%s", mean(full), mean(bc),
                 100 * gap, 100 * kAdvantage, per.c_str()));
    }
    {
      const double f = mean(rep.success_by_seed("full")), np = mean(rep.success_by_seed("no_pretrain")),
                   gp = mean(rep.success_by_seed("greedy_parse"));
      const auto* greedy = rep.parse("greedy");
      record(6, f >= np && f >= gp,
             fmt("full %.3f, no_pretrain %.3f, greedy_parse %.3f, no_augment %.3f; greedy replay %.3f",
                 f, np, gp, mean(rep.success_by_seed("no_augment")), greedy ? greedy->replay_success : NAN));
    }

    const int rc2 = run_cli(cli, "run-all --config \"" + pick_cfg + "\" --run-dir \"" + run2.string() + "\"",
                            work / "run2.log");
    if (rc2 != 0) throw Error("second run-all failed; see " + (work / "run2.log").string());
    {
      const std::string a = slurp(run1 / "metrics.csv"), b = slurp(run2 / "metrics.csv");
      record(8, !a.empty() && a == b,
             fmt("metrics.csv %zu vs %zu bytes, %s", a.size(), b.size(), a == b ? "identical" : "different"));
    }

    // 4: TidyUpLite parse and replay.
    const ExperimentConfig tcfg = ExperimentConfig::load(tidy_cfg);
    const TidyResult tidy = tidy_up(tcfg);
    record(4, tidy.replay >= kTidyReplay && tidy.seq_len <= kTidySeqLen,
           fmt("replay %.3f (>= %.2f), seq len %.2f (<= %.0f), demo len %.1f", tidy.replay, kTidyReplay, tidy.seq_len,
               kTidySeqLen, tidy.demo_len));

    record(9, rep.idm_holdout_accuracy >= kIdmAccuracy && tidy.idm_accuracy >= kIdmAccuracy,
           fmt("held-out type accuracy PickPlaceLite %.4f, TidyUpLite %.4f (>= %.2f)", rep.idm_holdout_accuracy,
               tidy.idm_accuracy, kIdmAccuracy));

    // 1: random oracle tables plus tables scored by both trained IDMs.
    {
      ParseCheck c = random_tables();
      const IdmModels pick_models = load_model((run1 / "models/idm.jsonl").string());
      const auto pick_demos = load_demos((run1 / "data/demos.jsonl").string());
      const ExperimentConfig pcfg = ExperimentConfig::load(pick_cfg);
      real_tables(pick_demos, pick_models, 1, 30, pcfg.parse.alpha, c);
      real_tables(tidy.demos, tidy.models, 3, kRealTables - 30, tcfg.parse.alpha, c);
      record(1, c.tables == kRandomTables + kRealTables && c.mismatches == 0 && c.seconds < kParseSeconds,
             fmt("%d tables (%d random, %d from trained models), %d mismatches, %.1f s parsing (< %.0f)", c.tables,
                 kRandomTables, c.tables - kRandomTables, c.mismatches, c.seconds, kParseSeconds));
    }

    // 2: gradient checks with the trained models' shapes and data.
    {
      const auto t0 = Clock::now();
      const IdmDataset data = load_dataset((run1 / "data/idm_dataset.jsonl").string());
      const IdmModels models = load_model((run1 / "models/idm.jsonl").string());
      const PolicyBundle policy = load_policy((run1 / "policies/full_seed0.jsonl").string());
      const GradCheck g = gradient_checks(data, models, policy);
      const double secs = seconds_since(t0);
      const int expected = kGradInstances * (1 + kNumLibraryPrimitives + 1 + kNumLibraryPrimitives);
      record(2, g.instances == expected && g.worst < kGradTolerance && secs < kGradSeconds,
             fmt("%d instances (expected %d), worst relative error %.2e (%s) (< %.0e), %.1f s (< %.0f)", g.instances,
                 expected, g.worst, g.worst_name.c_str(), kGradTolerance, secs, kGradSeconds));
    }
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
  }

  std::printf("\n");
  bool all = true;
  for (int id = 1; id <= 9; ++id) {
    const auto it = verdicts.find(id);
    const bool pass = it != verdicts.end() && it->second.pass;
    all = all && pass;
    std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", id,
                it != verdicts.end() ? it->second.detail.c_str() : "not evaluated");
  }
  return all ? 0 : 1;
}
