#include "prime/demos.hpp"

#include <algorithm>
#include <cmath>

#include "prime/container.hpp"
#include "prime/errors.hpp"
#include "prime/parallel.hpp"
#include "prime/rng.hpp"
#include "prime/serialize.hpp"

namespace prime {

namespace wl = world_limits;

namespace {

constexpr char kDemoFormat[] = "prime.demos";
constexpr int kDemoVersion = 1;

struct Waypoint {
  enum Kind { kMove, kClose, kOpen } kind;
  int object = -1;  // for moves: track this object's current (x, y); -1 = fixed
  double x = 0.0, y = 0.0, z = 0.0;
};

// Goal slot i gets the i-th unassigned object of the matching kind.
std::vector<std::pair<int, Region2>> assign_goals(const TaskSpec& task, const WorldState& s) {
  std::vector<std::pair<int, Region2>> out;
  std::vector<bool> used(s.objects.size(), false);
  for (const auto& goal : task.goal_regions) {
    for (std::size_t k = 0; k < s.objects.size(); ++k) {
      if (!used[k] && s.objects[k].kind == goal.kind) {
        used[k] = true;
        out.emplace_back(s.objects[k].id, goal.region);
        break;
      }
    }
  }
  return out;
}

class Scripted {
 public:
  Scripted(const TaskSpec& task, std::uint64_t seed, double noise, int attempt, const DemoConfig& cfg)
      : cfg_(cfg), noise_(noise), rng_(derive_key({seed, static_cast<std::uint64_t>(Stream::kDemoNoise),
                                                   static_cast<std::uint64_t>(attempt)})) {
    demo_.task = task.name;
    demo_.seed = seed;
    state_ = reset(task, seed);
    Rng layout(seed, Stream::kDemoLayout, static_cast<std::uint64_t>(attempt));
    for (const auto& [id, region] : assign_goals(task, state_)) {
      const double cx = 0.5 * (region.min_x + region.max_x);
      const double cy = 0.5 * (region.min_y + region.max_y);
      const double hx = 0.25 * (region.max_x - region.min_x);
      const double hy = 0.25 * (region.max_y - region.min_y);
      const double gx = layout.uniform(cx - hx, cx + hx);
      const double gy = layout.uniform(cy - hy, cy + hy);
      plan_.push_back({Waypoint::kMove, id, 0, 0, cfg.safe_height});
      plan_.push_back({Waypoint::kMove, id, 0, 0, cfg.grasp_height});
      plan_.push_back({Waypoint::kClose});
      plan_.push_back({Waypoint::kMove, id, 0, 0, cfg.safe_height});
      plan_.push_back({Waypoint::kMove, -1, gx, gy, cfg.safe_height});
      plan_.push_back({Waypoint::kMove, -1, gx, gy, cfg.place_height});
      plan_.push_back({Waypoint::kOpen});
    }
  }

  // Returns true when the plan completed within the step cap.
  bool run() {
    for (const auto& wp : plan_) {
      if (!execute(wp)) return false;
    }
    // Retreat straight up from wherever the last release happened.
    const Waypoint up{Waypoint::kMove, -1, state_.gripper_pos.x, state_.gripper_pos.y, cfg_.retreat_height};
    return execute(up);
  }

  Demonstration finish() {
    demo_.final_state = state_;
    return std::move(demo_);
  }

  const WorldState& state() const { return state_; }

 private:
  bool execute(const Waypoint& wp) {
    switch (wp.kind) {
      case Waypoint::kClose:
        for (int k = 0; k < 5 && !state_.held; ++k)
          if (!act(0, 0, 0, Grip::kClose)) return false;
        return state_.held.has_value();
      case Waypoint::kOpen:
        while (state_.held || state_.aperture < 1.0)
          if (!act(0, 0, 0, Grip::kOpen)) return false;
        return true;
      case Waypoint::kMove:
        break;
    }
    const Grip grip = state_.held ? Grip::kClose : Grip::kOpen;
    for (;;) {
      double tx = wp.x, ty = wp.y;
      if (wp.object >= 0) {
        const ObjectState* obj = state_.find(wp.object);
        tx = obj->pose.x;
        ty = obj->pose.y;
      }
      const Vec3& g = state_.gripper_pos;
      double dx = tx - g.x, dy = ty - g.y, dz = wp.z - g.z;
      const double tol = cfg_.waypoint_tolerance;
      if (std::abs(dx) <= tol && std::abs(dy) <= tol && std::abs(dz) <= tol &&
          std::abs(state_.gripper_yaw) <= 0.05)
        return true;
      // Lift clear before any horizontal travel.
      if ((std::abs(dx) > tol || std::abs(dy) > tol) && g.z < cfg_.safe_height - tol &&
          wp.z >= cfg_.safe_height - tol) {
        dx = 0.0;
        dy = 0.0;
      }
      if (!act(dx, dy, dz, grip)) return false;
    }
  }

  bool act(double dx, double dy, double dz, Grip grip) {
    if (static_cast<int>(demo_.frames.size()) >= cfg_.step_cap) return false;
    const double v = cfg_.speed;
    MotorAction a{{std::clamp(dx, -v, v), std::clamp(dy, -v, v), std::clamp(dz, -v, v)},
                  std::clamp(-state_.gripper_yaw, -wl::kMaxDeltaYaw, wl::kMaxDeltaYaw), grip};
    if (noise_ > 0.0) {
      a.delta_pos.x += noise_ * wl::kMaxDeltaPos * rng_.uniform(-1.0, 1.0);
      a.delta_pos.y += noise_ * wl::kMaxDeltaPos * rng_.uniform(-1.0, 1.0);
      a.delta_pos.z += noise_ * wl::kMaxDeltaPos * rng_.uniform(-1.0, 1.0);
      a.delta_yaw += noise_ * wl::kMaxDeltaYaw * rng_.uniform(-1.0, 1.0);
    }
    a = a.clamped();
    demo_.frames.push_back({state_, a});
    state_ = step(state_, a);
    return true;
  }

  DemoConfig cfg_;
  double noise_;
  Rng rng_;
  WorldState state_;
  std::vector<Waypoint> plan_;
  Demonstration demo_;
};

}  // namespace

Demonstration script_demo(const TaskSpec& task, std::uint64_t seed, double noise, const DemoConfig& cfg) {
  if (!(noise >= 0.0 && noise <= 0.5)) throw PreconditionError("demo noise must lie in [0, 0.5]");
  for (int attempt = 0; attempt < cfg.attempts; ++attempt) {
    Scripted script(task, seed, noise, attempt, cfg);
    if (script.run() && task_success(script.state(), task)) return script.finish();
  }
  throw DemoFailure("scripted demonstrator failed task " + task.name + " for seed " +
                    std::to_string(seed));
}

std::uint64_t demo_seed(std::uint64_t base_seed, int index) {
  return derive_key({base_seed, 0xde30ULL, static_cast<std::uint64_t>(index)});
}

std::vector<Demonstration> script_demos(const TaskSpec& task, std::uint64_t base_seed, int count,
                                        double noise, int workers, const DemoConfig& cfg) {
  std::vector<Demonstration> out(static_cast<std::size_t>(std::max(count, 0)));
  parallel_for(out.size(), workers, [&](std::size_t i) {
    out[i] = script_demo(task, demo_seed(base_seed, static_cast<int>(i)), noise, cfg);
  });
  return out;
}

void save_demos(const std::vector<Demonstration>& demos, const std::string& path) {
  Json header = {{"format", kDemoFormat},
                 {"version", kDemoVersion},
                 {"task", demos.empty() ? std::string() : demos.front().task},
                 {"seed", demos.empty() ? 0 : demos.front().seed},
                 {"count", demos.size()}};
  std::vector<Json> records;
  records.reserve(demos.size());
  for (const auto& d : demos) {
    Json frames = Json::array();
    for (const auto& f : d.frames) frames.push_back(Json::array({state_to_json(f.state), action_to_json(f.action)}));
    records.push_back({{"task", d.task}, {"seed", d.seed}, {"frames", std::move(frames)},
                       {"final", state_to_json(d.final_state)}});
  }
  write_records(path, header, records);
}

std::vector<Demonstration> load_demos(const std::string& path) {
  const RecordFile file = read_records(path, kDemoFormat, kDemoVersion);
  std::vector<Demonstration> demos;
  demos.reserve(file.records.size());
  try {
    for (const auto& r : file.records) {
      Demonstration d;
      d.task = r.at("task").get<std::string>();
      d.seed = r.at("seed").get<std::uint64_t>();
      for (const auto& f : r.at("frames"))
        d.frames.push_back({state_from_json(f.at(0)), action_from_json(f.at(1))});
      d.final_state = state_from_json(r.at("final"));
      demos.push_back(std::move(d));
    }
  } catch (const Json::exception& e) {
    throw CorruptFile(std::string("malformed demo record: ") + e.what());
  }
  return demos;
}

bool replays_exactly(const Demonstration& demo) {
  if (demo.frames.empty()) return true;
  WorldState s = demo.frames.front().state;
  for (const auto& f : demo.frames) {
    if (!(s == f.state)) return false;
    s = step(s, f.action);
  }
  return s == demo.final_state;
}

}  // namespace prime
