#include <gtest/gtest.h>

#include <filesystem>

#include "prime/demos.hpp"
#include "prime/errors.hpp"

using namespace prime;

TEST(Demos, ScriptedPickPlaceSucceedsAndReplays) {
  const auto task = pick_place_lite();
  for (std::uint64_t seed : {0u, 1u, 2u, 3u}) {
    const auto d = script_demo(task, seed, 0.1);
    EXPECT_TRUE(task_success(d.final_state, task)) << seed;
    EXPECT_TRUE(replays_exactly(d)) << seed;
    EXPECT_GT(d.length(), 10u);
    for (const auto& f : d.frames) ASSERT_TRUE(f.action.within_bounds());
  }
}

TEST(Demos, CleanDemoSucceeds) { EXPECT_TRUE(task_success(script_demo(pick_place_lite(), 3, 0.0).final_state, pick_place_lite())); }

TEST(Demos, PickPlaceLengthRange) {
  for (const auto& d : script_demos(pick_place_lite(), 0, 30, 0.1)) {
    EXPECT_GE(d.length(), 100u) << d.seed;
    EXPECT_LE(d.length(), 600u) << d.seed;
  }
}

TEST(Demos, ScriptedTidyUpSucceeds) {
  const auto task = tidy_up_lite();
  const auto d = script_demo(task, 5, 0.1);
  EXPECT_TRUE(task_success(d.final_state, task));
  EXPECT_TRUE(replays_exactly(d));
}

TEST(Demos, Deterministic) {
  const auto task = pick_place_lite();
  EXPECT_EQ(script_demo(task, 9, 0.1), script_demo(task, 9, 0.1));
  EXPECT_NE(script_demo(task, 9, 0.1), script_demo(task, 9, 0.0));
}

TEST(Demos, BatchMatchesSingleAndIgnoresWorkers) {
  const auto task = pick_place_lite();
  const auto a = script_demos(task, 4, 3, 0.1, 1);
  const auto b = script_demos(task, 4, 3, 0.1, 3);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a[2], script_demo(task, demo_seed(4, 2), 0.1));
}

TEST(Demos, TamperedDemoDoesNotReplay) {
  auto d = script_demo(pick_place_lite(), 1, 0.1);
  d.frames[3].action.delta_pos.x += 0.001;
  EXPECT_FALSE(replays_exactly(d));
}

TEST(Demos, ImpossibleTaskThrows) {
  DemoConfig cfg;
  cfg.step_cap = 20;
  cfg.attempts = 2;
  EXPECT_THROW(script_demo(pick_place_lite(), 0, 0.1, cfg), DemoFailure);
}

TEST(Demos, SaveLoadRoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "prime_demos.jsonl").string();
  const auto demos = script_demos(tidy_up_lite(), 2, 2, 0.1);
  save_demos(demos, path);
  const auto back = load_demos(path);
  EXPECT_EQ(back, demos);
  EXPECT_TRUE(replays_exactly(back[1]));
}
