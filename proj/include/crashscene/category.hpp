#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace crashscene {

// Agent taxonomy. D0 = same direction as the ego, D1 = oncoming.
enum class AgentCategory { kD0T1, kD0T2, kD0T3, kD1T1, kD1T2, kD1T3, kD1T4, kEgo };

inline constexpr std::array<AgentCategory, 7> kAgentCategories = {
    AgentCategory::kD0T1, AgentCategory::kD0T2, AgentCategory::kD0T3, AgentCategory::kD1T1,
    AgentCategory::kD1T2, AgentCategory::kD1T3, AgentCategory::kD1T4};

inline std::string to_string(AgentCategory c) {
  switch (c) {
    case AgentCategory::kD0T1: return "D0T1";
    case AgentCategory::kD0T2: return "D0T2";
    case AgentCategory::kD0T3: return "D0T3";
    case AgentCategory::kD1T1: return "D1T1";
    case AgentCategory::kD1T2: return "D1T2";
    case AgentCategory::kD1T3: return "D1T3";
    case AgentCategory::kD1T4: return "D1T4";
    case AgentCategory::kEgo: return "EGO";
  }
  return "?";
}

inline std::optional<AgentCategory> parse_category(std::string_view s) {
  for (AgentCategory c : kAgentCategories) {
    if (to_string(c) == s) return c;
  }
  if (s == "EGO") return AgentCategory::kEgo;
  return std::nullopt;
}

}  // namespace crashscene
