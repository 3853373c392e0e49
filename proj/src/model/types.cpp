#include "fasb/model/types.hpp"

#include <algorithm>

#include "fasb/common/error.hpp"

namespace fasb {

std::string to_string(const HeadId& head) {
  return "(" + std::to_string(head.layer) + "," + std::to_string(head.head) + ")";
}

void SteeringSpec::add(HeadId head, Eigen::VectorXf direction, float strength) {
  const bool duplicate = std::any_of(entries_.begin(), entries_.end(),
                                     [&](const SteeringEntry& e) { return e.head == head; });
  require(!duplicate, "duplicate_head", "steering spec already has head " + to_string(head));
  require(strength >= 0.0F, "invalid_steering", "steering strength must be >= 0");
  entries_.push_back(SteeringEntry{head, std::move(direction), strength});
}

SteeringSpec SteeringSpec::with_strength(float strength) const {
  SteeringSpec copy = *this;
  for (auto& entry : copy.entries_) entry.strength = strength;
  return copy;
}

}  // namespace fasb
