#include "prime/primitives.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "prime/errors.hpp"

namespace prime {

namespace wl = world_limits;

const char* to_string(PrimitiveType p) {
  switch (p) {
    case PrimitiveType::kReach: return "Reach";
    case PrimitiveType::kGrasp: return "Grasp";
    case PrimitiveType::kPlace: return "Place";
    case PrimitiveType::kPush: return "Push";
    case PrimitiveType::kOther: return "Other";
    case PrimitiveType::kAtomic: return "Atomic";
  }
  return "?";
}

PrimitiveType primitive_from_string(const std::string& s) {
  for (int i = 0; i <= static_cast<int>(PrimitiveType::kAtomic); ++i) {
    const auto p = static_cast<PrimitiveType>(i);
    if (s == to_string(p)) return p;
  }
  throw CorruptFile("unknown primitive type '" + s + "'");
}

int param_dim(PrimitiveType p) {
  switch (p) {
    case PrimitiveType::kReach:
    case PrimitiveType::kGrasp:
    case PrimitiveType::kPlace: return 4;
    case PrimitiveType::kPush: return 7;
    default: return 0;
  }
}

std::vector<ParamRange> param_ranges(PrimitiveType p) {
  constexpr double kHalfPi = std::numbers::pi / 2.0;
  std::vector<ParamRange> r = {{wl::kMinX, wl::kMaxX}, {wl::kMinY, wl::kMaxY}, {0.0, 0.15}, {-kHalfPi, kHalfPi}};
  // Grasping only works at or below the attach height; sampling higher
  // targets would just waste rollouts.
  if (p == PrimitiveType::kGrasp) r[2] = {0.0, 0.05};
  if (p == PrimitiveType::kPush) {
    r.push_back({-0.15, 0.15});
    r.push_back({-0.15, 0.15});
    r.push_back({-0.05, 0.05});
  }
  if (!is_library(p)) r.clear();
  return r;
}

void check_params(PrimitiveType p, const PrimitiveParams& x, const PrimitiveConfig& cfg) {
  if (!is_library(p))
    throw PreconditionError(std::string("primitive ") + to_string(p) + " is not executable");
  if (static_cast<int>(x.size()) != param_dim(p))
    throw PreconditionError(std::string("wrong parameter count for ") + to_string(p));
  for (double v : x.values)
    if (!std::isfinite(v)) throw PreconditionError("non-finite primitive parameter");
  if (x[0] < wl::kMinX || x[0] > wl::kMaxX || x[1] < wl::kMinY || x[1] > wl::kMaxY ||
      x[2] < wl::kMinZ || x[2] > wl::kMaxZ)
    throw PreconditionError("primitive target outside workspace");
  if (p == PrimitiveType::kPush && std::sqrt(x[4] * x[4] + x[5] * x[5] + x[6] * x[6]) > cfg.push_max_norm)
    throw PreconditionError("push displacement exceeds limit");
}

PrimitiveParams clamp_params(PrimitiveType p, PrimitiveParams x, const PrimitiveConfig& cfg) {
  const auto ranges = param_ranges(p);
  if (x.size() != ranges.size()) throw PreconditionError(std::string("wrong parameter count for ") + to_string(p));
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    if (!std::isfinite(x.values[i])) x.values[i] = 0.5 * (ranges[i].lo + ranges[i].hi);
    x.values[i] = std::clamp(x.values[i], ranges[i].lo, ranges[i].hi);
  }
  if (p == PrimitiveType::kPush) {
    const double n = std::sqrt(x[4] * x[4] + x[5] * x[5] + x[6] * x[6]);
    if (n > cfg.push_max_norm)
      for (std::size_t i = 4; i < 7; ++i) x.values[i] *= cfg.push_max_norm / n;
  }
  return x;
}

namespace {

struct Target {
  double x, y, z, yaw;
};

Grip carry_grip(const WorldState& s) { return s.held ? Grip::kClose : Grip::kOpen; }

// Proportional (unit gain) step toward the target along the
// rise-translate-descend profile. Returns false once converged.
bool approach_action(const WorldState& s, const Target& t, const PrimitiveConfig& cfg, Grip grip,
                     MotorAction& a) {
  const Vec3& g = s.gripper_pos;
  const double xy_err = std::hypot(t.x - g.x, t.y - g.y);
  const double yaw_err = wrap_angle(t.yaw - s.gripper_yaw);
  const bool xy_ok = xy_err <= cfg.pos_tolerance;
  const bool yaw_ok = std::abs(yaw_err) <= cfg.yaw_tolerance;
  const bool z_ok = std::abs(t.z - g.z) <= cfg.pos_tolerance;
  if (xy_ok && yaw_ok && z_ok) return false;

  a = MotorAction{};
  a.grip = grip;
  a.delta_yaw = yaw_err;
  if (!xy_ok) {
    if (g.z < cfg.safe_height - cfg.pos_tolerance) {
      a.delta_pos.z = cfg.safe_height - g.z;
    } else {
      a.delta_pos = {t.x - g.x, t.y - g.y, cfg.safe_height - g.z};
    }
  } else {
    a.delta_pos = {t.x - g.x, t.y - g.y, t.z - g.z};
  }
  a = a.clamped();
  return true;
}

// Straight-line proportional move (used for the push stroke).
bool linear_action(const WorldState& s, const Target& t, const PrimitiveConfig& cfg, Grip grip,
                   MotorAction& a) {
  const Vec3& g = s.gripper_pos;
  const double err = std::sqrt((t.x - g.x) * (t.x - g.x) + (t.y - g.y) * (t.y - g.y) +
                               (t.z - g.z) * (t.z - g.z));
  if (err <= cfg.pos_tolerance) return false;
  a = MotorAction{{t.x - g.x, t.y - g.y, t.z - g.z}, wrap_angle(t.yaw - s.gripper_yaw), grip};
  a = a.clamped();
  return true;
}

class Recorder {
 public:
  Recorder(const WorldState& s, int cap) : state_(s), cap_(cap) {}

  bool full() const { return static_cast<int>(seg_.transitions.size()) >= cap_; }

  void apply(const MotorAction& a) {
    seg_.transitions.push_back({state_, a});
    state_ = step(state_, a);
  }

  const WorldState& state() const { return state_; }

  Segment finish(bool timed_out) {
    if (seg_.transitions.empty()) apply(MotorAction{{}, 0.0, carry_grip(state_)});
    seg_.final_state = state_;
    seg_.timed_out = timed_out;
    return std::move(seg_);
  }

 private:
  WorldState state_;
  Segment seg_;
  int cap_;
};

}  // namespace

bool executable(PrimitiveType p, const WorldState& s) {
  switch (p) {
    case PrimitiveType::kReach: return true;
    case PrimitiveType::kGrasp:
    case PrimitiveType::kPush: return !s.held.has_value();
    case PrimitiveType::kPlace: return s.held.has_value();
    default: return false;
  }
}

Segment execute_primitive(const WorldState& s, PrimitiveType p, const PrimitiveParams& x,
                          const PrimitiveConfig& cfg) {
  check_params(p, x, cfg);
  Recorder rec(s, cfg.step_cap);
  const Target target{x[0], x[1], x[2], x[3]};
  MotorAction a;

  auto approach = [&](Grip grip_override, bool use_override) {
    for (;;) {
      if (rec.full()) return false;
      const Grip grip = use_override ? grip_override : carry_grip(rec.state());
      if (!approach_action(rec.state(), target, cfg, grip, a)) return true;
      rec.apply(a);
    }
  };

  bool converged = true;
  switch (p) {
    case PrimitiveType::kReach:
      converged = approach(Grip::kOpen, false);
      break;
    case PrimitiveType::kGrasp: {
      // An empty gripper opens on the way in; a held object stays held.
      converged = approach(Grip::kOpen, !s.held.has_value());
      while (converged && !rec.state().held && rec.state().aperture >= 0.1) {
        if (rec.full()) {
          converged = false;
          break;
        }
        rec.apply(MotorAction{{}, 0.0, Grip::kClose});
      }
      break;
    }
    case PrimitiveType::kPlace:
      converged = approach(Grip::kOpen, false);
      while (converged && (rec.state().held || rec.state().aperture < 1.0)) {
        if (rec.full()) {
          converged = false;
          break;
        }
        rec.apply(MotorAction{{}, 0.0, Grip::kOpen});
      }
      break;
    case PrimitiveType::kPush: {
      converged = approach(Grip::kOpen, false);
      const Target end{std::clamp(x[0] + x[4], wl::kMinX, wl::kMaxX),
                       std::clamp(x[1] + x[5], wl::kMinY, wl::kMaxY),
                       std::clamp(x[2] + x[6], wl::kMinZ, wl::kMaxZ), x[3]};
      while (converged) {
        if (rec.full()) {
          converged = false;
          break;
        }
        if (!linear_action(rec.state(), end, cfg, carry_grip(rec.state()), a)) break;
        rec.apply(a);
      }
      break;
    }
    default:
      break;
  }
  return rec.finish(!converged);
}

bool primitive_success(const Segment& seg, PrimitiveType p, const PrimitiveParams& x,
                       const PrimitiveConfig& cfg) {
  const WorldState& start = seg.initial_state();
  const WorldState& end = seg.final_state;
  switch (p) {
    case PrimitiveType::kReach: {
      const Vec3& g = end.gripper_pos;
      const double d = std::sqrt((g.x - x[0]) * (g.x - x[0]) + (g.y - x[1]) * (g.y - x[1]) +
                                 (g.z - x[2]) * (g.z - x[2]));
      return d <= cfg.pos_tolerance &&
             std::abs(wrap_angle(end.gripper_yaw - x[3])) <= cfg.yaw_tolerance;
    }
    case PrimitiveType::kGrasp:
      return !start.held && end.held.has_value();
    case PrimitiveType::kPlace: {
      if (!start.held || end.held) return false;
      const ObjectState* obj = end.find(*start.held);
      return obj && std::hypot(obj->pose.x - x[0], obj->pose.y - x[1]) <= cfg.place_release_tolerance;
    }
    case PrimitiveType::kPush: {
      for (std::size_t k = 0; k < start.objects.size() && k < end.objects.size(); ++k) {
        const auto& a = start.objects[k].pose;
        const auto& b = end.objects[k].pose;
        if (std::hypot(b.x - a.x, b.y - a.y) >= cfg.push_success_displacement) return true;
      }
      return false;
    }
    default:
      return false;
  }
}

const char* to_string(SamplingMode m) {
  return m == SamplingMode::kUniform ? "uniform" : "object_prior";
}

SamplingMode sampling_mode_from_string(const std::string& s) {
  if (s == "uniform") return SamplingMode::kUniform;
  if (s == "object_prior") return SamplingMode::kObjectPrior;
  throw ConfigError("unknown sampling mode '" + s + "'");
}

PrimitiveParams sample_params(PrimitiveType p, const WorldState& s, SamplingMode mode, Rng& rng,
                              const PrimitiveConfig& cfg) {
  const auto ranges = param_ranges(p);
  if (ranges.empty())
    throw PreconditionError(std::string("cannot sample parameters for ") + to_string(p));
  PrimitiveParams x;
  x.values.resize(ranges.size());
  for (std::size_t i = 0; i < ranges.size(); ++i) x.values[i] = rng.uniform(ranges[i].lo, ranges[i].hi);

  const bool contact = p == PrimitiveType::kGrasp || p == PrimitiveType::kPush;
  if (mode == SamplingMode::kObjectPrior && contact && !s.objects.empty()) {
    const auto& center = s.objects[rng.index(s.objects.size())].pose;
    // Truncation by rejection; the centre lies inside the workspace so the
    // acceptance probability is at least 1/4.
    for (;;) {
      const double px = rng.normal(center.x, cfg.prior_sigma);
      const double py = rng.normal(center.y, cfg.prior_sigma);
      if (px >= wl::kMinX && px <= wl::kMaxX && py >= wl::kMinY && py <= wl::kMaxY) {
        x.values[0] = px;
        x.values[1] = py;
        break;
      }
    }
  }
  return x;
}

}  // namespace prime
