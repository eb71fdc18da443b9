// Checks against models trained at desk scale. One PickPlaceLite fixture
// (collector data, IDM, parsed demos, pretrained policy) is built once and
// shared by every test.

#include <gtest/gtest.h>

#include <cstdio>

#include "prime/harness.hpp"

using namespace prime;

namespace {

struct Desk {
  ExperimentConfig cfg;
  TaskSpec task;
  IdmDataset train;
  IdmDataset test;
  IdmModels models;
  std::vector<Demonstration> demos;
  std::vector<ParsedSequence> parsed;
  PolicyBundle pre;
};

Desk build() {
  Desk d;
  d.task = pick_place_lite();
  CollectorConfig cc = d.cfg.collector;
  cc.seed = stage_seed(0, StageSeed::kCollect);
  const IdmDataset all = collect_dataset(d.task, cc);
  std::tie(d.train, d.test) = split_holdout(all, 0.1, stage_seed(0, StageSeed::kSplit));
  IdmConfig ic = d.cfg.idm;
  ic.classifier.seed = ic.param.seed = stage_seed(0, StageSeed::kIdm);
  d.models = train_idm(d.train, ic);
  d.demos = script_demos(d.task, stage_seed(0, StageSeed::kDemos), 30, 0.1);
  for (const auto& demo : d.demos) d.parsed.push_back(parse_demo(demo, d.models, 1, d.cfg.parse));
  PolicyConfig pc = d.cfg.policy;
  pc.pretrain.seed = stage_seed(0, StageSeed::kPolicy, 0);
  d.pre = pretrain_policy(d.train, pc);
  return d;
}

const Desk& desk() {
  static const Desk d = build();
  return d;
}

// Demo made of a single Grasp rollout on the object centre.
Demonstration grasp_demo(const TaskSpec& task, std::uint64_t seed) {
  const WorldState s0 = reset(task, seed);
  const auto& o = s0.objects[0].pose;
  const auto seg = execute_primitive(s0, PrimitiveType::kGrasp, {{o.x, o.y, 0.01, 0.0}});
  Demonstration demo;
  demo.task = task.name;
  demo.seed = seed;
  demo.frames = seg.transitions;
  demo.final_state = seg.final_state;
  return demo;
}

std::vector<PolicyTuple> tuples_of(const Desk& d, std::size_t first, std::size_t last) {
  std::vector<PolicyTuple> out;
  for (std::size_t i = first; i < last; ++i) {
    auto p = parsed_tuples(d.parsed[i], d.demos[i], 1);
    auto a = augment_stepwise(d.parsed[i], d.demos[i], d.models, 1);
    out.insert(out.end(), p.begin(), p.end());
    out.insert(out.end(), a.begin(), a.end());
  }
  return out;
}

double type_loss(const PolicyBundle& b, const std::vector<PolicyTuple>& tuples) {
  nn::Matrix s(b.feature_dim, static_cast<Eigen::Index>(tuples.size()));
  std::vector<int> labels;
  std::vector<double> w(tuples.size(), 1.0);
  for (std::size_t i = 0; i < tuples.size(); ++i) {
    for (int r = 0; r < b.feature_dim; ++r) s(r, static_cast<Eigen::Index>(i)) = tuples[i].s[static_cast<std::size_t>(r)];
    labels.push_back(class_index(tuples[i].p));
  }
  std::array<bool, kNumClasses> mask{};
  for (int k = 0; k < kNumLibraryPrimitives; ++k) mask[k] = true;
  return nn::classification_objective(b.prim.net, b.prim.norm.apply(s), labels, w, mask, nullptr);
}

}  // namespace

TEST(Desk, ClassifierLossDecreasesOverFirstFiveEpochs) {
  const auto& loss = desk().models.classifier.curve.epoch_loss;
  ASSERT_GE(loss.size(), 5u);
  for (int i = 0; i < 4; ++i) EXPECT_LT(loss[i + 1], loss[i]) << i;
}

TEST(Desk, ParamNllBelowInitialization) {
  const auto& d = desk();
  for (auto p : kLibraryPrimitives) {
    const ParamModel& m = d.models.param(p);
    ASSERT_TRUE(m.trained) << to_string(p);
    std::vector<IdmSample> train, test;
    for (const auto& s : d.train.samples)
      if (s.p == p) train.push_back(s);
    for (const auto& s : d.test.samples)
      if (s.p == p) test.push_back(s);
    ASSERT_FALSE(test.empty());
    auto targets = [&](const std::vector<IdmSample>& v) {
      nn::Matrix y(m.spec.dim, static_cast<Eigen::Index>(v.size()));
      for (std::size_t b = 0; b < v.size(); ++b)
        for (int k = 0; k < m.spec.dim; ++k) y(k, static_cast<Eigen::Index>(b)) = v[b].x[static_cast<std::size_t>(k)];
      return y;
    };
    Rng rng(9, Stream::kTest);
    nn::Mlp init(m.net.sizes(), rng);
    nn::init_mixture_bias(init, targets(train), m.spec, rng);
    const nn::Matrix x = m.norm.apply(pair_inputs(test));
    const std::vector<double> w(test.size(), 1.0);
    const double before = nn::mixture_objective(init, x, targets(test), w, m.spec, nullptr);
    const double after = nn::mixture_objective(m.net, x, targets(test), w, m.spec, nullptr);
    EXPECT_LT(after, before) << to_string(p);
  }
}

TEST(Desk, HeldOutGraspArgmaxIsGrasp) {
  const auto& d = desk();
  std::vector<IdmSample> grasps;
  for (const auto& s : d.test.samples)
    if (s.p == PrimitiveType::kGrasp) grasps.push_back(s);
  ASSERT_GT(grasps.size(), 50u);
  const auto scores = idm_score_batch(d.models, pair_inputs(grasps), false);
  std::size_t hit = 0;
  for (const auto& t : scores)
    hit += std::max_element(t.log_score.begin(), t.log_score.end()) - t.log_score.begin() ==
           class_index(PrimitiveType::kGrasp);
  const double acc = static_cast<double>(hit) / static_cast<double>(grasps.size());
  std::printf("held-out Grasp argmax accuracy %.4f over %zu\n", acc, grasps.size());
  EXPECT_GE(acc, 0.9);
}

TEST(Desk, SingleGraspDemoIsOneSegment) {
  const auto& d = desk();
  const auto demo = grasp_demo(d.task, 21);
  const auto p = parse_demo(demo, d.models, 1, d.cfg.parse);
  ASSERT_EQ(p.segments.size(), 1u);
  EXPECT_EQ(p.segments[0].t_start, 0);
  EXPECT_EQ(p.segments[0].t_end, static_cast<std::int64_t>(demo.length()));
  EXPECT_EQ(p.segments[0].p, PrimitiveType::kGrasp);
  EXPECT_EQ(p.segments[0].x.size(), 4u);
}

TEST(Desk, CleanDemoParseReplays) {
  const auto& d = desk();
  const auto demo = script_demo(d.task, 3, 0.0);
  const auto p = parse_demo(demo, d.models, 1, d.cfg.parse);
  EXPECT_TRUE(replay(p, demo, d.task).success);
}

TEST(Desk, CleanGraspSegmentRelabelsToGrasp) {
  const auto& d = desk();
  const auto demo = grasp_demo(d.task, 22);
  ParsedSequence p;
  p.segments.push_back({0, static_cast<std::int64_t>(demo.length()), PrimitiveType::kGrasp, {}, 0.0});
  AugmentStats stats;
  const auto t = augment_stepwise(p, demo, d.models, 1, &stats);
  ASSERT_GT(stats.tuples, 0u);
  const double agree = 1.0 - static_cast<double>(stats.disagreements) / static_cast<double>(stats.tuples);
  std::printf("interior Grasp relabel rate %.3f over %zu\n", agree, stats.tuples);
  EXPECT_GE(agree, 0.8);
}

TEST(Desk, PretrainedTypeHeadBeatsChance) {
  const auto& d = desk();
  std::vector<const std::vector<double>*> rows;
  std::vector<int> labels;
  for (const auto& s : d.test.samples)
    if (is_library(s.p)) {
      rows.push_back(&s.s);
      labels.push_back(class_index(s.p));
    }
  nn::Matrix s(d.pre.feature_dim, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int r = 0; r < d.pre.feature_dim; ++r) s(r, static_cast<Eigen::Index>(i)) = (*rows[i])[static_cast<std::size_t>(r)];
  const nn::Matrix lp = d.pre.prim.log_probs(s);
  // Class-balanced accuracy, so chance is one over the number of types.
  std::array<double, kNumLibraryPrimitives> hit{}, total{};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Eigen::Index k;
    lp.col(static_cast<Eigen::Index>(i)).maxCoeff(&k);
    total[labels[i]] += 1;
    hit[labels[i]] += k == labels[i];
  }
  double acc = 0;
  for (int k = 0; k < kNumLibraryPrimitives; ++k) acc += hit[k] / total[k] / kNumLibraryPrimitives;
  std::printf("pretrained type head balanced accuracy %.4f\n", acc);
  EXPECT_GE(acc, 1.0 / kNumLibraryPrimitives + 0.2);
}

TEST(Desk, OneFinetuneEpochBeatsPretrainedInit) {
  const auto& d = desk();
  const auto tuples = tuples_of(d, 0, 30);
  PolicyConfig pc = d.cfg.policy;
  pc.finetune.epochs = 1;
  pc.finetune.min_updates = 0;
  pc.finetune.seed = stage_seed(0, StageSeed::kPolicy, 1);
  const auto b = finetune_policy(&d.pre, tuples, d.task.name, d.pre.feature_dim, pc);
  const double before = type_loss(d.pre, tuples), after = type_loss(b, tuples);
  std::printf("type loss on tuples: pretrained %.4f, after one epoch %.4f\n", before, after);
  EXPECT_LT(after, before);
}

TEST(Desk, HeldOutSegmentStartAccuracyAndRolloutSuccess) {
  const auto& d = desk();
  PolicyConfig pc = d.cfg.policy;
  pc.finetune.seed = stage_seed(0, StageSeed::kPolicy, 1);
  const auto held = finetune_policy(&d.pre, tuples_of(d, 0, 24), d.task.name, d.pre.feature_dim, pc);
  std::size_t hit = 0, total = 0;
  for (std::size_t i = 24; i < 30; ++i)
    for (const auto& t : parsed_tuples(d.parsed[i], d.demos[i], 1)) {
      Eigen::Index k;
      held.prim.log_probs(Eigen::Map<const nn::Vector>(t.s.data(), static_cast<Eigen::Index>(t.s.size())))
          .col(0)
          .maxCoeff(&k);
      hit += k == class_index(t.p);
      ++total;
    }
  ASSERT_GT(total, 0u);
  const double acc = static_cast<double>(hit) / static_cast<double>(total);
  std::printf("held-out segment-start type accuracy %.4f over %zu\n", acc, total);
  EXPECT_GE(acc, 0.9);

  const auto full = finetune_policy(&d.pre, tuples_of(d, 0, 30), d.task.name, d.pre.feature_dim, pc);
  const auto e = evaluate_policy(full, d.task, stage_seed(0, StageSeed::kEval), 50, d.cfg.max_prims, 1);
  std::printf("policy success %.3f over 50; failed grasps %d, Grasp retries %d, with new parameters %d\n",
              e.success_rate, e.failed_grasps, e.grasp_retries, e.grasp_retries_adjusted);
  EXPECT_GE(e.success_rate, 0.8);
}

TEST(Desk, BcOverfitsOneCleanDemo) {
  const auto task = pick_place_lite();
  const auto demo = script_demo(task, 42, 0.0);
  BcConfig cfg;
  // The default floor is set for the 30-demo budget; a single trajectory
  // needs a narrower one to be reproduced step for step.
  cfg.sigma_min = 0.2;
  const auto bc = train_bc_baseline({demo}, 1, cfg);
  WorldState s = demo.state(0);
  bool success = false;
  for (int t = 0; t < 1000 && !success; ++t) {
    s = step(s, bc.act(s, 1));
    success = task_success(s, task);
  }
  EXPECT_TRUE(success);
}
