#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace budgetflow {

enum class Topology { Linear = 0, Star = 1, Feedback = 2, PlannerDriven = 3 };

inline constexpr std::size_t kNumTopologies = 4;
inline constexpr std::array<Topology, kNumTopologies> kAllTopologies = {
    Topology::Linear, Topology::Star, Topology::Feedback, Topology::PlannerDriven};

constexpr int topology_index(Topology t) { return static_cast<int>(t); }

constexpr std::string_view topology_name(Topology t) {
  switch (t) {
    case Topology::Linear: return "linear";
    case Topology::Star: return "star";
    case Topology::Feedback: return "feedback";
    case Topology::PlannerDriven: return "planner";
  }
  return "?";
}

/// Accepts the short names above plus "planner-driven".
std::optional<Topology> parse_topology(std::string_view name);
Topology topology_from_index(int index);

}  // namespace budgetflow
