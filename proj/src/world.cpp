#include "prime/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "json.hpp"

#include "prime/errors.hpp"
#include "prime/rng.hpp"

namespace prime {

namespace wl = world_limits;
using nlohmann::json;

const ObjectState* WorldState::find(int id) const {
  for (const auto& o : objects)
    if (o.id == id) return &o;
  return nullptr;
}

double wrap_angle(double a) {
  constexpr double kPi = std::numbers::pi;
  if (a > -kPi && a <= kPi) return a;
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a <= 0.0) a += 2.0 * kPi;
  return a - kPi;
}

MotorAction MotorAction::clamped() const {
  MotorAction out = *this;
  out.delta_pos.x = std::clamp(delta_pos.x, -wl::kMaxDeltaPos, wl::kMaxDeltaPos);
  out.delta_pos.y = std::clamp(delta_pos.y, -wl::kMaxDeltaPos, wl::kMaxDeltaPos);
  out.delta_pos.z = std::clamp(delta_pos.z, -wl::kMaxDeltaPos, wl::kMaxDeltaPos);
  out.delta_yaw = std::clamp(delta_yaw, -wl::kMaxDeltaYaw, wl::kMaxDeltaYaw);
  // NaN commands are treated as zero.
  if (std::isnan(out.delta_pos.x)) out.delta_pos.x = 0.0;
  if (std::isnan(out.delta_pos.y)) out.delta_pos.y = 0.0;
  if (std::isnan(out.delta_pos.z)) out.delta_pos.z = 0.0;
  if (std::isnan(out.delta_yaw)) out.delta_yaw = 0.0;
  return out;
}

bool MotorAction::within_bounds() const {
  auto ok = [](double v, double m) { return v >= -m && v <= m; };
  return ok(delta_pos.x, wl::kMaxDeltaPos) && ok(delta_pos.y, wl::kMaxDeltaPos) &&
         ok(delta_pos.z, wl::kMaxDeltaPos) && ok(delta_yaw, wl::kMaxDeltaYaw);
}

double bounding_radius(const Shape& shape) {
  if (const auto* d = std::get_if<Disc>(&shape)) return d->radius;
  const auto& b = std::get<Box>(shape);
  return std::hypot(b.half_x, b.half_y);
}

namespace {

double point_segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((px - ax) * dx + (py - ay) * dy) / len2, 0.0, 1.0);
  return std::hypot(px - (ax + t * dx), py - (ay + t * dy));
}

// Slab test of segment p0 + t (p1 - p0), t in [0,1], against |x|<=hx, |y|<=hy.
bool segment_hits_aabb(double x0, double y0, double x1, double y1, double hx, double hy) {
  double t_lo = 0.0, t_hi = 1.0;
  const double d[2] = {x1 - x0, y1 - y0};
  const double p[2] = {x0, y0};
  const double h[2] = {hx, hy};
  for (int k = 0; k < 2; ++k) {
    if (d[k] == 0.0) {
      if (p[k] < -h[k] || p[k] > h[k]) return false;
      continue;
    }
    double ta = (-h[k] - p[k]) / d[k];
    double tb = (h[k] - p[k]) / d[k];
    if (ta > tb) std::swap(ta, tb);
    t_lo = std::max(t_lo, ta);
    t_hi = std::min(t_hi, tb);
    if (t_lo > t_hi) return false;
  }
  return true;
}

double clamp_x(double v) { return std::clamp(v, wl::kMinX, wl::kMaxX); }
double clamp_y(double v) { return std::clamp(v, wl::kMinY, wl::kMaxY); }
double clamp_z(double v) { return std::clamp(v, wl::kMinZ, wl::kMaxZ); }

bool region_in_workspace(const Region2& r) {
  return r.min_x <= r.max_x && r.min_y <= r.max_y && r.min_x >= wl::kMinX &&
         r.max_x <= wl::kMaxX && r.min_y >= wl::kMinY && r.max_y <= wl::kMaxY;
}

}  // namespace

bool segment_hits_footprint(const ObjectState& obj, double ax, double ay, double bx, double by) {
  if (const auto* d = std::get_if<Disc>(&obj.shape))
    return point_segment_distance(obj.pose.x, obj.pose.y, ax, ay, bx, by) <= d->radius;
  const auto& b = std::get<Box>(obj.shape);
  const double c = std::cos(obj.pose.theta), s = std::sin(obj.pose.theta);
  auto to_local = [&](double x, double y, double& lx, double& ly) {
    const double rx = x - obj.pose.x, ry = y - obj.pose.y;
    lx = c * rx + s * ry;
    ly = -s * rx + c * ry;
  };
  double lx0, ly0, lx1, ly1;
  to_local(ax, ay, lx0, ly0);
  to_local(bx, by, lx1, ly1);
  return segment_hits_aabb(lx0, ly0, lx1, ly1, b.half_x, b.half_y);
}

WorldState step(const WorldState& s, const MotorAction& raw) {
  const MotorAction a = raw.clamped();
  WorldState n = s;

  const Vec3 old = s.gripper_pos;
  n.gripper_pos.x = clamp_x(old.x + a.delta_pos.x);
  n.gripper_pos.y = clamp_y(old.y + a.delta_pos.y);
  n.gripper_pos.z = clamp_z(old.z + a.delta_pos.z);
  n.gripper_yaw = wrap_angle(s.gripper_yaw + a.delta_yaw);

  const double moved_x = n.gripper_pos.x - old.x;
  const double moved_y = n.gripper_pos.y - old.y;

  // Pushing: a low, empty gripper drags every object its sweep touches.
  if (!s.held && std::min(old.z, n.gripper_pos.z) <= wl::kPushHeight) {
    for (auto& obj : n.objects) {
      if (segment_hits_footprint(obj, old.x, old.y, n.gripper_pos.x, n.gripper_pos.y)) {
        obj.pose.x = clamp_x(obj.pose.x + moved_x);
        obj.pose.y = clamp_y(obj.pose.y + moved_y);
      }
    }
  }

  if (a.grip == Grip::kClose) {
    n.aperture = std::max(0.0, s.aperture - wl::kApertureRate);
    if (!n.held && n.gripper_pos.z <= wl::kGraspHeight) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& obj : n.objects) {
        const double d = std::hypot(obj.pose.x - n.gripper_pos.x, obj.pose.y - n.gripper_pos.y);
        if (d <= wl::kGraspRadius && d < best) {
          best = d;
          n.held = obj.id;
        }
      }
    }
  } else {
    n.aperture = std::min(1.0, s.aperture + wl::kApertureRate);
    n.held.reset();  // released at the current (x, y)
  }

  if (n.held) {
    for (auto& obj : n.objects) {
      if (obj.id == *n.held) {
        obj.pose.x = n.gripper_pos.x;
        obj.pose.y = n.gripper_pos.y;
      }
    }
  }

  n.step_count = s.step_count + 1;
  return n;
}

bool task_success(const WorldState& s, const TaskSpec& task) {
  if (s.held) return false;
  for (const auto& goal : task.goal_regions) {
    bool filled = false;
    for (const auto& obj : s.objects) {
      if (obj.kind == goal.kind && goal.region.contains(obj.pose.x, obj.pose.y)) {
        filled = true;
        break;
      }
    }
    if (!filled) return false;
  }
  return true;
}

WorldState reset(const TaskSpec& task, std::uint64_t seed) {
  Rng rng(seed, Stream::kReset);
  WorldState s;
  s.objects.reserve(task.objects.size());
  for (std::size_t k = 0; k < task.objects.size(); ++k) {
    const auto& tmpl = task.objects[k];
    const double r = bounding_radius(tmpl.shape);
    bool placed = false;
    for (int attempt = 0; attempt < wl::kMaxPlacementAttempts && !placed; ++attempt) {
      Pose2 pose{rng.uniform(tmpl.init_range.min_x, tmpl.init_range.max_x),
                 rng.uniform(tmpl.init_range.min_y, tmpl.init_range.max_y),
                 rng.uniform(tmpl.min_theta, tmpl.max_theta)};
      bool clear = true;
      for (const auto& other : s.objects) {
        if (std::hypot(other.pose.x - pose.x, other.pose.y - pose.y) <
            r + bounding_radius(other.shape)) {
          clear = false;
          break;
        }
      }
      if (clear) {
        s.objects.push_back(ObjectState{static_cast<int>(k), tmpl.shape, pose, tmpl.kind});
        placed = true;
      }
    }
    if (!placed)
      throw InitError("could not place object " + std::to_string(k) + " of task " + task.name +
                      " without overlap");
  }
  return s;
}

// Task definitions -----------------------------------------------------------

void TaskSpec::validate() const {
  if (objects.empty()) throw ConfigError("task " + name + " has no objects");
  for (const auto& g : goal_regions) {
    if (!region_in_workspace(g.region))
      throw ConfigError("task " + name + ": goal region outside workspace");
    bool found = false;
    for (const auto& o : objects) found = found || o.kind == g.kind;
    if (!found)
      throw ConfigError("task " + name + ": goal region references kind " +
                        to_string(g.kind) + " absent from layout");
  }
  for (const auto& o : objects) {
    if (!region_in_workspace(o.init_range))
      throw ConfigError("task " + name + ": init range outside workspace");
    if (const auto* d = std::get_if<Disc>(&o.shape); d && !(d->radius > 0))
      throw ConfigError("task " + name + ": disc radius must be positive");
    if (const auto* b = std::get_if<Box>(&o.shape); b && !(b->half_x > 0 && b->half_y > 0))
      throw ConfigError("task " + name + ": box half-extents must be positive");
  }
}

TaskSpec pick_place_lite() {
  TaskSpec t;
  t.name = "PickPlaceLite";
  t.objects.push_back({Disc{0.02}, ObjectKind::kSmall, {0.15, 0.40, 0.40, 0.75}, 0.0, 0.0});
  t.goal_regions.push_back({ObjectKind::kSmall, {0.65, 0.85, 0.45, 0.75}});
  return t;
}

TaskSpec tidy_up_lite() {
  constexpr double kQuarter = std::numbers::pi / 4.0;
  TaskSpec t;
  t.name = "TidyUpLite";
  t.objects.push_back({Box{0.04, 0.03}, ObjectKind::kLarge, {0.15, 0.40, 0.65, 0.85}, -kQuarter, kQuarter});
  t.objects.push_back({Box{0.02, 0.02}, ObjectKind::kSmall, {0.10, 0.25, 0.30, 0.55}, -kQuarter, kQuarter});
  t.objects.push_back({Box{0.02, 0.02}, ObjectKind::kSmall, {0.30, 0.45, 0.30, 0.55}, -kQuarter, kQuarter});
  t.goal_regions.push_back({ObjectKind::kLarge, {0.60, 0.90, 0.65, 0.90}});
  t.goal_regions.push_back({ObjectKind::kSmall, {0.60, 0.75, 0.15, 0.35}});
  t.goal_regions.push_back({ObjectKind::kSmall, {0.80, 0.95, 0.15, 0.35}});
  return t;
}

const char* to_string(ObjectKind k) { return k == ObjectKind::kSmall ? "small" : "large"; }

ObjectKind object_kind_from_string(const std::string& s) {
  if (s == "small") return ObjectKind::kSmall;
  if (s == "large") return ObjectKind::kLarge;
  throw ConfigError("unknown object kind '" + s + "'");
}

// Task file keys:
//   name: string
//   objects: [{shape: "disc"|"box", radius | half_x, half_y, kind: "small"|"large",
//              init: [min_x, max_x, min_y, max_y], theta: [min, max] (optional)}]
//   goals:   [{kind, region: [min_x, max_x, min_y, max_y]}]
namespace {

Region2 region_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw ConfigError("region must be [min_x, max_x, min_y, max_y]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json region_to_json(const Region2& r) { return json::array({r.min_x, r.max_x, r.min_y, r.max_y}); }

}  // namespace

TaskSpec load_task(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open task file " + path);
  TaskSpec t;
  try {
    const json j = json::parse(in);
    t.name = j.at("name").get<std::string>();
    for (const auto& o : j.at("objects")) {
      ObjectTemplate tmpl;
      const auto shape = o.at("shape").get<std::string>();
      if (shape == "disc") {
        tmpl.shape = Disc{o.at("radius").get<double>()};
      } else if (shape == "box") {
        tmpl.shape = Box{o.at("half_x").get<double>(), o.at("half_y").get<double>()};
      } else {
        throw ConfigError("unknown shape '" + shape + "'");
      }
      tmpl.kind = object_kind_from_string(o.at("kind").get<std::string>());
      tmpl.init_range = region_from_json(o.at("init"));
      if (o.contains("theta")) {
        tmpl.min_theta = o["theta"].at(0).get<double>();
        tmpl.max_theta = o["theta"].at(1).get<double>();
      }
      t.objects.push_back(tmpl);
    }
    for (const auto& g : j.at("goals"))
      t.goal_regions.push_back(
          {object_kind_from_string(g.at("kind").get<std::string>()), region_from_json(g.at("region"))});
  } catch (const json::exception& e) {
    throw ConfigError("malformed task file " + path + ": " + e.what());
  }
  t.validate();
  return t;
}

void save_task(const TaskSpec& task, const std::string& path) {
  json j;
  j["name"] = task.name;
  j["objects"] = json::array();
  for (const auto& o : task.objects) {
    json jo;
    if (const auto* d = std::get_if<Disc>(&o.shape)) {
      jo["shape"] = "disc";
      jo["radius"] = d->radius;
    } else {
      const auto& b = std::get<Box>(o.shape);
      jo["shape"] = "box";
      jo["half_x"] = b.half_x;
      jo["half_y"] = b.half_y;
    }
    jo["kind"] = to_string(o.kind);
    jo["init"] = region_to_json(o.init_range);
    jo["theta"] = json::array({o.min_theta, o.max_theta});
    j["objects"].push_back(jo);
  }
  j["goals"] = json::array();
  for (const auto& g : task.goal_regions)
    j["goals"].push_back({{"kind", to_string(g.kind)}, {"region", region_to_json(g.region)}});
  std::ofstream out(path);
  if (!out) throw IoError("cannot write task file " + path);
  out << j.dump(2) << '\n';
}

TaskSpec resolve_task(const std::string& name_or_path) {
  if (name_or_path == "PickPlaceLite") return pick_place_lite();
  if (name_or_path == "TidyUpLite") return tidy_up_lite();
  return load_task(name_or_path);
}

}  // namespace prime
