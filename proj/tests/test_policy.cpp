#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "prime/errors.hpp"
#include "prime/policy.hpp"
#include "prime/verify.hpp"

using namespace prime;

namespace {

const int kD = feature_dim(1);

IdmModels reach_only_models() {
  Rng rng(1, Stream::kTest);
  IdmDataset d;
  d.feature_dim = feature_dim(1);
  d.roster_size = 1;
  for (int i = 0; i < 60; ++i) {
    IdmSample s;
    s.s.resize(static_cast<std::size_t>(d.feature_dim));
    for (double& v : s.s) v = rng.uniform();
    s.s_prime = s.s;
    s.p = i % 2 ? PrimitiveType::kOther : PrimitiveType::kReach;
    if (s.p == PrimitiveType::kReach) s.x = {{0.5, 0.5, 0.1, 0.0}};
    s.weight = 1.0;
    d.samples.push_back(s);
  }
  d.counts[class_index(PrimitiveType::kReach)] = 30;
  d.counts[class_index(PrimitiveType::kOther)] = 30;
  IdmConfig cfg;
  cfg.classifier.epochs = 1;
  cfg.classifier.hidden = {8};
  cfg.param.epochs = 1;
  cfg.param.min_updates = 0;
  cfg.param.hidden = {8};
  return train_idm(d, cfg);
}

PolicyConfig quick_policy() {
  PolicyConfig c;
  c.finetune.epochs = 5;
  c.finetune.min_updates = 0;
  c.finetune.batch_size = 16;
  c.finetune.hidden = {16};
  c.pretrain = c.finetune;
  return c;
}

std::vector<PolicyTuple> random_tuples(int n, std::uint64_t seed) {
  Rng rng(seed, Stream::kTest);
  std::vector<PolicyTuple> out;
  for (int i = 0; i < n; ++i) {
    PolicyTuple t;
    t.s.resize(kD);
    for (double& v : t.s) v = rng.uniform();
    t.p = i % 2 ? PrimitiveType::kGrasp : PrimitiveType::kReach;
    t.x = {{rng.uniform(), rng.uniform(), rng.uniform(0, 0.05), rng.uniform(-1, 1)}};
    t.source = i % 3 ? TupleSource::kAugmented : TupleSource::kParsed;
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

TEST(Policy, AugmentationCoversInteriorFrames) {
  const auto models = reach_only_models();
  const auto demo = script_demo(pick_place_lite(), 0, 0.1);
  ASSERT_GT(demo.length(), 25u);
  ParsedSequence parsed;
  parsed.segments.push_back({0, 10, PrimitiveType::kOther, {}, 0.0});
  parsed.segments.push_back({10, 20, PrimitiveType::kGrasp, {{0.5, 0.5, 0.01, 0.0}}, 0.0});
  AugmentStats stats;
  const auto tuples = augment_stepwise(parsed, demo, models, 1, &stats);
  ASSERT_EQ(tuples.size(), 9u);
  for (std::size_t i = 0; i < tuples.size(); ++i) {
    EXPECT_EQ(tuples[i].state_index, 11 + static_cast<std::int64_t>(i));
    EXPECT_EQ(tuples[i].target_end, 20);
    EXPECT_EQ(tuples[i].source, TupleSource::kAugmented);
    EXPECT_EQ(tuples[i].p, PrimitiveType::kReach);
    EXPECT_EQ(tuples[i].x.size(), 4u);
    EXPECT_EQ(tuples[i].s, featurize(demo.state(11 + i), 1));
  }
  EXPECT_EQ(stats.tuples, 9u);
  EXPECT_EQ(stats.disagreements, 9u);
}

TEST(Policy, ParsedTuplesSkipOther) {
  const auto demo = script_demo(pick_place_lite(), 0, 0.1);
  ParsedSequence parsed;
  parsed.segments.push_back({0, 10, PrimitiveType::kOther, {}, 0.0});
  parsed.segments.push_back({10, 20, PrimitiveType::kGrasp, {{0.5, 0.5, 0.01, 0.0}}, 0.0});
  const auto t = parsed_tuples(parsed, demo, 1);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t[0].state_index, 10);
  EXPECT_EQ(t[0].target_end, 20);
  EXPECT_EQ(t[0].source, TupleSource::kParsed);
}

TEST(Policy, OtherAndUntrainedTypesAreNeverChosen) {
  const auto b = finetune_policy(nullptr, random_tuples(40, 1), "PickPlaceLite", kD, quick_policy());
  EXPECT_FALSE(b.prim.allowed[class_index(PrimitiveType::kOther)]);
  EXPECT_FALSE(b.prim.allowed[class_index(PrimitiveType::kPush)]);
  EXPECT_FALSE(b.params[class_index(PrimitiveType::kPush)].trained);
  Rng rng(2, Stream::kTest);
  for (int i = 0; i < 50; ++i) {
    const auto s = reset(pick_place_lite(), static_cast<std::uint64_t>(i));
    for (auto mode : {RolloutMode::kModeSelect, RolloutMode::kSample}) {
      const auto [p, x] = policy_act(b, s, 1, mode, rng);
      EXPECT_TRUE(p == PrimitiveType::kReach || p == PrimitiveType::kGrasp);
      EXPECT_NO_THROW(check_params(p, x));
    }
  }
}

TEST(Policy, HeadGradientsMatchFiniteDifferences) {
  const auto b = finetune_policy(nullptr, random_tuples(20, 3), "PickPlaceLite", kD, quick_policy());
  const auto tuples = random_tuples(6, 4);
  nn::Matrix s(kD, 6), x(4, 6);
  std::vector<int> labels;
  std::vector<double> w;
  for (int c = 0; c < 6; ++c) {
    for (int r = 0; r < kD; ++r) s(r, c) = tuples[c].s[r];
    for (int r = 0; r < 4; ++r) x(r, c) = tuples[c].x[r];
    labels.push_back(class_index(tuples[c].p));
    w.push_back(1.0 + c);
  }
  const auto sizes = b.prim.net.sizes();
  const double e1 = verify::gradient_check(
      [&](const nn::Vector& p, nn::Vector* g) {
        return nn::classification_objective(nn::Mlp(sizes, p), b.prim.norm.apply(s), labels, w, b.prim.allowed, g);
      },
      b.prim.net.params());
  EXPECT_LT(e1, 1e-6);
  const auto& head = b.params[class_index(PrimitiveType::kReach)];
  const auto psizes = head.net.sizes();
  const double e2 = verify::gradient_check(
      [&](const nn::Vector& p, nn::Vector* g) {
        return nn::mixture_objective(nn::Mlp(psizes, p), head.norm.apply(s), x, w, head.spec, g);
      },
      head.net.params());
  EXPECT_LT(e2, 1e-6);
}

TEST(Policy, TrainingIsDeterministicAcrossWorkers) {
  auto cfg = quick_policy();
  const auto tuples = random_tuples(30, 5);
  const auto a = finetune_policy(nullptr, tuples, "PickPlaceLite", kD, cfg);
  cfg.workers = 3;
  const auto b = finetune_policy(nullptr, tuples, "PickPlaceLite", kD, cfg);
  EXPECT_EQ(a.prim.net.params(), b.prim.net.params());
  for (int k = 0; k < kNumLibraryPrimitives; ++k) EXPECT_EQ(a.params[k].net.params(), b.params[k].net.params());
}

TEST(Policy, FinetuneContinuesFromInit) {
  const auto cfg = quick_policy();
  const auto init = finetune_policy(nullptr, random_tuples(30, 6), "PickPlaceLite", kD, cfg);
  const auto b = finetune_policy(&init, random_tuples(30, 7), "PickPlaceLite", kD, cfg);
  EXPECT_EQ(b.prim.norm.mean, init.prim.norm.mean);
  EXPECT_NE(b.prim.net.params(), init.prim.net.params());
  EXPECT_THROW(finetune_policy(&init, random_tuples(3, 8), "PickPlaceLite", 15, cfg), DimensionMismatch);
  EXPECT_THROW(finetune_policy(nullptr, {}, "PickPlaceLite", kD, cfg), PreconditionError);
}

TEST(Policy, RolloutIsSeededAndBounded) {
  const auto b = finetune_policy(nullptr, random_tuples(30, 9), "PickPlaceLite", kD, quick_policy());
  const auto task = pick_place_lite();
  const auto r1 = rollout_policy(b, task, 11, 3, RolloutMode::kSample);
  const auto r2 = rollout_policy(b, task, 11, 3, RolloutMode::kSample);
  EXPECT_EQ(r1.types, r2.types);
  EXPECT_LE(r1.primitives_executed, 3);
  const auto e1 = evaluate_policy(b, task, 4, 6, 2, 1);
  const auto e2 = evaluate_policy(b, task, 4, 6, 2, 3);
  EXPECT_EQ(e1.episodes, 6);
  EXPECT_EQ(e1.success_rate, e2.success_rate);
  EXPECT_EQ(e1.mean_primitives, e2.mean_primitives);
  EXPECT_NE(eval_seed(4, 0), eval_seed(4, 1));
}

TEST(Policy, SaveLoadRoundTrip) {
  const auto b = finetune_policy(nullptr, random_tuples(30, 10), "PickPlaceLite", kD, quick_policy());
  const auto path = (std::filesystem::temp_directory_path() / "prime_policy.jsonl").string();
  save_policy(b, path);
  const auto c = load_policy(path);
  EXPECT_EQ(c.prim.allowed, b.prim.allowed);
  Rng r1(1, Stream::kTest), r2(1, Stream::kTest);
  const auto s = reset(pick_place_lite(), 3);
  EXPECT_EQ(policy_act(b, s, 1, RolloutMode::kSample, r1), policy_act(c, s, 1, RolloutMode::kSample, r2));
}

TEST(Policy, ConfigJsonRoundTrip) {
  auto c = quick_policy();
  c.augmented_weight = 0.5;
  c.use_pretrain = false;
  const auto back = PolicyConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  c.augmented_weight = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Bc, ActionEncodingClampsAndRoundTrips) {
  const MotorAction a{{0.01, -0.02, 0.005}, 0.05, Grip::kClose};
  const auto v = encode_action(a);
  ASSERT_EQ(v.size(), 5u);
  EXPECT_DOUBLE_EQ(v[1], -1.0);
  EXPECT_EQ(v[4], 1.0);
  const auto back = decode_action(v);
  EXPECT_NEAR(back.delta_pos.x, 0.01, 1e-15);
  EXPECT_EQ(back.grip, Grip::kClose);
  const std::vector<double> wild{5, -7, 0, 3, -0.2};
  const auto c = decode_action(wild);
  EXPECT_TRUE(c.within_bounds());
  EXPECT_EQ(c.delta_pos.x, 0.02);
  EXPECT_EQ(c.delta_pos.y, -0.02);
  EXPECT_EQ(c.delta_yaw, 0.1);
  EXPECT_EQ(c.grip, Grip::kOpen);
  const std::vector<double> short_v{1, 2};
  EXPECT_THROW(decode_action(short_v), DimensionMismatch);
}

TEST(Bc, TrainsRollsOutAndRoundTrips) {
  const auto task = pick_place_lite();
  const auto demos = script_demos(task, 1, 2, 0.1);
  BcConfig cfg;
  cfg.train.epochs = 2;
  cfg.train.min_updates = 0;
  cfg.train.hidden = {16};
  const auto p = train_bc_baseline(demos, 1, cfg);
  const auto a = p.act(reset(task, 0), 1);
  EXPECT_TRUE(a.within_bounds());
  const auto r = rollout_bc(p, task, 5, 40);
  EXPECT_LE(r.primitives_executed, 40);
  const auto path = (std::filesystem::temp_directory_path() / "prime_bc.jsonl").string();
  save_bc(p, path);
  EXPECT_EQ(load_bc(path).act(reset(task, 0), 1), a);
}
