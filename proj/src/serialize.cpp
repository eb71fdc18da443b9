#include "prime/serialize.hpp"

#include "prime/errors.hpp"

namespace prime {

// State layout: {"g": [x, y, z, yaw, aperture], "h": id|null, "n": steps,
//                "o": [[id, shape(0 disc/1 box), a, b, x, y, theta, kind], ...]}
Json state_to_json(const WorldState& s) {
  Json objs = Json::array();
  for (const auto& o : s.objects) {
    double a = 0.0, b = 0.0;
    int shape = 0;
    if (const auto* d = std::get_if<Disc>(&o.shape)) {
      a = d->radius;
    } else {
      const auto& bx = std::get<Box>(o.shape);
      shape = 1;
      a = bx.half_x;
      b = bx.half_y;
    }
    objs.push_back(Json::array({o.id, shape, a, b, o.pose.x, o.pose.y, o.pose.theta,
                                o.kind == ObjectKind::kSmall ? 0 : 1}));
  }
  Json j;
  j["g"] = Json::array({s.gripper_pos.x, s.gripper_pos.y, s.gripper_pos.z, s.gripper_yaw, s.aperture});
  j["h"] = s.held ? Json(*s.held) : Json(nullptr);
  j["n"] = s.step_count;
  j["o"] = std::move(objs);
  return j;
}

WorldState state_from_json(const Json& j) {
  try {
    WorldState s;
    const auto& g = j.at("g");
    s.gripper_pos = {g.at(0).get<double>(), g.at(1).get<double>(), g.at(2).get<double>()};
    s.gripper_yaw = g.at(3).get<double>();
    s.aperture = g.at(4).get<double>();
    if (!j.at("h").is_null()) s.held = j["h"].get<int>();
    s.step_count = j.at("n").get<std::int64_t>();
    for (const auto& o : j.at("o")) {
      ObjectState obj;
      obj.id = o.at(0).get<int>();
      if (o.at(1).get<int>() == 0)
        obj.shape = Disc{o.at(2).get<double>()};
      else
        obj.shape = Box{o.at(2).get<double>(), o.at(3).get<double>()};
      obj.pose = {o.at(4).get<double>(), o.at(5).get<double>(), o.at(6).get<double>()};
      obj.kind = o.at(7).get<int>() == 0 ? ObjectKind::kSmall : ObjectKind::kLarge;
      s.objects.push_back(obj);
    }
    return s;
  } catch (const Json::exception& e) {
    throw CorruptFile(std::string("malformed state record: ") + e.what());
  }
}

Json action_to_json(const MotorAction& a) {
  return Json::array({a.delta_pos.x, a.delta_pos.y, a.delta_pos.z, a.delta_yaw,
                      a.grip == Grip::kClose ? 1 : 0});
}

MotorAction action_from_json(const Json& j) {
  try {
    return MotorAction{{j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()},
                       j.at(3).get<double>(), j.at(4).get<int>() == 1 ? Grip::kClose : Grip::kOpen};
  } catch (const Json::exception& e) {
    throw CorruptFile(std::string("malformed action record: ") + e.what());
  }
}

Json params_to_json(const PrimitiveParams& x) {
  if (x.empty()) return nullptr;
  return Json(x.values);
}

PrimitiveParams params_from_json(const Json& j) {
  if (j.is_null()) return {};
  try {
    return PrimitiveParams{j.get<std::vector<double>>()};
  } catch (const Json::exception& e) {
    throw CorruptFile(std::string("malformed parameter record: ") + e.what());
  }
}

}  // namespace prime
