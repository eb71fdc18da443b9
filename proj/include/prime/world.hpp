#pragma once

// Deterministic 2.5-D tabletop world: planar object poses, a gripper with
// height and yaw, and kinematic grasp/push contact rules.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace prime {

// Workspace bounds and contact constants (meters / radians).
namespace world_limits {
inline constexpr double kMinX = 0.0, kMaxX = 1.0;
inline constexpr double kMinY = 0.0, kMaxY = 1.0;
inline constexpr double kMinZ = 0.0, kMaxZ = 0.3;
inline constexpr double kMaxDeltaPos = 0.02;
inline constexpr double kMaxDeltaYaw = 0.1;
inline constexpr double kApertureRate = 0.2;
inline constexpr double kGraspHeight = 0.03;
inline constexpr double kPushHeight = 0.05;
inline constexpr double kGraspRadius = 0.03;
inline constexpr double kHomeX = 0.5, kHomeY = 0.1, kHomeZ = 0.25;
inline constexpr int kMaxPlacementAttempts = 100;
}  // namespace world_limits

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

struct Pose2 {
  double x = 0.0, y = 0.0, theta = 0.0;
  friend bool operator==(const Pose2&, const Pose2&) = default;
};

struct Disc {
  double radius = 0.0;
  friend bool operator==(const Disc&, const Disc&) = default;
};

struct Box {
  double half_x = 0.0, half_y = 0.0;
  friend bool operator==(const Box&, const Box&) = default;
};

using Shape = std::variant<Disc, Box>;

enum class ObjectKind { kSmall, kLarge };

struct ObjectState {
  int id = 0;
  Shape shape = Disc{0.02};
  Pose2 pose;
  ObjectKind kind = ObjectKind::kSmall;
  friend bool operator==(const ObjectState&, const ObjectState&) = default;
};

struct WorldState {
  Vec3 gripper_pos{world_limits::kHomeX, world_limits::kHomeY, world_limits::kHomeZ};
  double gripper_yaw = 0.0;  // (-pi, pi]
  double aperture = 1.0;     // 1 = open
  std::optional<int> held;   // object id
  std::vector<ObjectState> objects;
  std::int64_t step_count = 0;
  friend bool operator==(const WorldState&, const WorldState&) = default;

  const ObjectState* find(int id) const;
};

enum class Grip { kOpen, kClose };

struct MotorAction {
  Vec3 delta_pos;
  double delta_yaw = 0.0;
  Grip grip = Grip::kOpen;
  friend bool operator==(const MotorAction&, const MotorAction&) = default;

  // Componentwise clamp into the legal command box.
  MotorAction clamped() const;
  bool within_bounds() const;
};

struct Region2 {
  double min_x = 0.0, max_x = 0.0, min_y = 0.0, max_y = 0.0;
  bool contains(double x, double y) const {
    return x >= min_x && x <= max_x && y >= min_y && y <= max_y;
  }
  friend bool operator==(const Region2&, const Region2&) = default;
};

struct GoalRegion {
  ObjectKind kind = ObjectKind::kSmall;
  Region2 region;
};

struct ObjectTemplate {
  Shape shape = Disc{0.02};
  ObjectKind kind = ObjectKind::kSmall;
  Region2 init_range;
  double min_theta = 0.0, max_theta = 0.0;
};

struct TaskSpec {
  std::string name;
  std::vector<GoalRegion> goal_regions;
  std::vector<ObjectTemplate> objects;

  // Throws ConfigError when a goal kind has no matching object or a range
  // leaves the workspace.
  void validate() const;
};

TaskSpec pick_place_lite();
TaskSpec tidy_up_lite();

// Built-in name ("PickPlaceLite", "TidyUpLite") or a path to a JSON task file.
TaskSpec resolve_task(const std::string& name_or_path);
TaskSpec load_task(const std::string& path);
void save_task(const TaskSpec& task, const std::string& path);

WorldState reset(const TaskSpec& task, std::uint64_t seed);
WorldState step(const WorldState& s, const MotorAction& a);
bool task_success(const WorldState& s, const TaskSpec& task);

// Bounding radius of a footprint (used for placement rejection).
double bounding_radius(const Shape& shape);
// True when the segment from a to b touches the object's footprint.
bool segment_hits_footprint(const ObjectState& obj, double ax, double ay, double bx, double by);

// Angle wrapped into (-pi, pi]; values already in range are returned as-is.
double wrap_angle(double a);

const char* to_string(ObjectKind k);
ObjectKind object_kind_from_string(const std::string& s);

}  // namespace prime
