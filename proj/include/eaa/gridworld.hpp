#pragma once

// Graph-based urban search-and-rescue environment.
//
// Rooms form an undirected graph. Victims sit in rooms and may be covered by
// rubble; the engineer clears rubble, the medic heals uncovered victims for a
// team reward of +10 each. A layout without an engineer start room is the
// single-agent (medic only) variant.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace eaa {

using RoomId = std::size_t;
using ActionId = std::size_t;
using StateFeatures = std::vector<double>;

inline constexpr double kHealReward = 10.0;

enum class AgentRole { Medic, Engineer };

std::string_view role_name(AgentRole role);

class LayoutError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Layout {
  std::vector<std::string> rooms;
  std::vector<std::pair<RoomId, RoomId>> edges;
  std::vector<RoomId> victim_candidate_rooms;  // sorted, unique
  std::vector<RoomId> rubble_rooms;            // sorted, unique
  std::size_t num_victims = 0;
  RoomId medic_start = 0;
  std::optional<RoomId> engineer_start;  // absent in the single-agent variant
  std::size_t max_steps = 50;

  // Filled in by validate(): sorted neighbour lists.
  std::vector<std::vector<RoomId>> adjacency;

  bool multi_agent() const { return engineer_start.has_value(); }
  std::vector<AgentRole> agents() const;
  std::size_t num_agents() const { return multi_agent() ? 2 : 1; }
  std::optional<RoomId> find_room(std::string_view name) const;
  bool adjacent(RoomId a, RoomId b) const;
  double optimal_reward() const { return kHealReward * static_cast<double>(num_victims); }
};

/// Checks every layout invariant and builds the adjacency lists.
/// Throws LayoutError naming the violated invariant.
void validate(Layout& layout);

/// Parses the line-oriented layout format:
///   room <id> | edge <id> <id> | victim_room <id> | rubble <id> | victims <n>
///   start medic <id> | start engineer <id> | max_steps <n>
/// '#' starts a comment. Parse errors carry the offending line number.
Layout load_layout(std::string_view text);
Layout load_layout_file(const std::filesystem::path& path);
std::string write_layout(const Layout& layout);

/// The single-agent variant: engineer removed. Requires a rubble-free layout.
Layout single_agent_variant(Layout layout);

enum class VictimStatus : std::uint8_t { Absent, PresentUnhealed, Healed };

struct EnvState {
  RoomId medic_room = 0;
  std::optional<RoomId> engineer_room;
  std::vector<VictimStatus> victim_status;  // per room
  std::vector<std::uint8_t> rubble;         // per room, 0/1
  std::size_t step_count = 0;

  bool operator==(const EnvState&) const = default;
  auto operator<=>(const EnvState&) const = default;
};

// Action ids are layout-wide and agent-independent:
//   0 NoOp, 1 Heal, 2 ClearRubble, 3 + r MoveTo(room r).
struct AgentAction {
  enum class Kind { NoOp, Heal, ClearRubble, MoveTo };
  Kind kind = Kind::NoOp;
  RoomId room = 0;  // MoveTo only

  static AgentAction noop() { return {}; }
  static AgentAction heal() { return {Kind::Heal, 0}; }
  static AgentAction clear_rubble() { return {Kind::ClearRubble, 0}; }
  static AgentAction move_to(RoomId r) { return {Kind::MoveTo, r}; }
};

inline constexpr ActionId kNoOp = 0;
inline constexpr ActionId kHeal = 1;
inline constexpr ActionId kClearRubble = 2;
inline constexpr ActionId move_action(RoomId r) { return 3 + r; }

ActionId encode_action(const AgentAction& action);
AgentAction decode_action(ActionId id);
std::size_t action_count(const Layout& layout);
std::string action_name(const Layout& layout, ActionId id);

struct FeatureSchema {
  std::vector<std::string> names;
  std::optional<std::size_t> index_of(std::string_view name) const;
  std::size_t size() const { return names.size(); }
};

/// Feature order: medic_room, engineer_room (multi-agent only),
/// victim_present:<room> and victim_healed:<room> per victim candidate room,
/// rubble:<room> per rubble room.
FeatureSchema feature_schema(const Layout& layout);

/// Places victims uniformly without replacement over the candidate rooms,
/// rubble on every rubble room, agents on their start rooms.
EnvState reset(const Layout& layout, std::uint64_t seed);

struct StepOutcome {
  EnvState state;
  double reward = 0.0;
  bool done = false;
};

/// Applies one joint action (one entry per agent, in Layout::agents() order).
/// The engineer resolves before the medic. Invalid actions are no-ops.
/// Throws std::logic_error if the episode is already over.
StepOutcome step(const Layout& layout, const EnvState& state, std::span<const ActionId> actions);

bool is_terminal(const Layout& layout, const EnvState& state);
std::size_t unhealed_victims(const EnvState& state);
std::size_t rubble_count(const EnvState& state);

StateFeatures featurize(const EnvState& state, const Layout& layout, AgentRole agent);

/// Ascending action ids: NoOp, Heal (medic) or ClearRubble (engineer), MoveTo per neighbour.
std::vector<ActionId> valid_actions(const Layout& layout, const EnvState& state, AgentRole agent);

/// Every non-terminal and terminal state reachable from any reset placement.
std::vector<EnvState> reachable_states(const Layout& layout);

// Chooses an action for agent `agent_index` given its features and valid actions.
using JointPolicy =
    std::function<ActionId(std::size_t agent_index, const StateFeatures&, std::span<const ActionId>)>;

struct EvalResult {
  double mean_reward = 0.0;
  double mean_length = 0.0;
};

/// Runs `episodes` episodes with reset seeds derived from `seed`.
EvalResult evaluate_policy(const Layout& layout, const JointPolicy& policy, std::size_t episodes,
                           std::uint64_t seed);

}  // namespace eaa
