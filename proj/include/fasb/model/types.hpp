#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace fasb {

using TokenId = std::int32_t;

// (layer, head) pair; ordered lexicographically.
struct HeadId {
  std::size_t layer = 0;
  std::size_t head = 0;

  auto operator<=>(const HeadId&) const = default;
};

std::string to_string(const HeadId& head);

struct SteeringEntry {
  HeadId head;
  Eigen::VectorXf direction;
  float strength = 0.0F;
};

// Additive head-level intervention. A head is steered iff it has an entry;
// an empty spec means no intervention.
class SteeringSpec {
 public:
  SteeringSpec() = default;

  // Throws fasb::Error("duplicate_head") if the head already has an entry.
  void add(HeadId head, Eigen::VectorXf direction, float strength);

  const std::vector<SteeringEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

  // Copy of this spec with every strength replaced by `strength`.
  SteeringSpec with_strength(float strength) const;

 private:
  std::vector<SteeringEntry> entries_;
};

struct StepOutput {
  Eigen::VectorXf logits;
  // Pre-output-projection head outputs at the current position, after any
  // steering addition. Keyed by exactly the heads tapped at prime time.
  std::map<HeadId, Eigen::VectorXf> head_activations;
};

}  // namespace fasb
