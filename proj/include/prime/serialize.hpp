#pragma once

// JSON encodings of world values. Doubles are written in shortest
// round-trip form, so decode(encode(v)) == v bit-for-bit.

#include "prime/container.hpp"
#include "prime/primitives.hpp"
#include "prime/world.hpp"

namespace prime {

Json state_to_json(const WorldState& s);
WorldState state_from_json(const Json& j);

Json action_to_json(const MotorAction& a);
MotorAction action_from_json(const Json& j);

Json params_to_json(const PrimitiveParams& x);  // null when empty
PrimitiveParams params_from_json(const Json& j);

}  // namespace prime
