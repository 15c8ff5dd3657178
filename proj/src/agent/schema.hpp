#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace plab {

inline constexpr int kRationaleLen = 8;

// Structured action output: one verb, one argument token, and a fixed-length
// rationale token sequence.
struct AgentOutput {
  int verb = 0;
  int arg = 0;
  std::array<int, kRationaleLen> rationale{};

  bool operator==(const AgentOutput&) const = default;
  bool same_action(const AgentOutput& o) const { return verb == o.verb && arg == o.arg; }
};

// Closed vocabularies shared by datasets, targets and the model. Ids are
// positions in the vectors; serialization keeps them stable.
struct ActionSchema {
  std::vector<std::string> verbs;
  std::vector<std::string> args;       // widget/app/contact/url tokens, id 0 = "<none>"
  std::vector<std::string> rationale;  // rationale token vocabulary
  std::vector<std::string> prompt;     // prompt token vocabulary

  int verb_id(const std::string& name) const;
  int arg_id(const std::string& name) const;
  int rationale_id(const std::string& name) const;
  int prompt_id(const std::string& name) const;

  void validate(const AgentOutput& out) const;  // throws on out-of-range ids

  // Stable content hash covering every vocabulary entry and K_c.
  std::uint64_t hash() const;
};

// The fixed verb set. Argument and text vocabularies come from the dataset
// generator; verbs are part of the platform contract.
ActionSchema base_schema();

}  // namespace plab
