#include "eaa/gridworld.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

#include "eaa/random.hpp"
#include "eaa/text.hpp"

namespace eaa {

std::string_view role_name(AgentRole role) {
  return role == AgentRole::Medic ? "medic" : "engineer";
}

std::vector<AgentRole> Layout::agents() const {
  if (multi_agent()) return {AgentRole::Medic, AgentRole::Engineer};
  return {AgentRole::Medic};
}

std::optional<RoomId> Layout::find_room(std::string_view name) const {
  const auto it = std::find(rooms.begin(), rooms.end(), name);
  if (it == rooms.end()) return std::nullopt;
  return static_cast<RoomId>(it - rooms.begin());
}

bool Layout::adjacent(RoomId a, RoomId b) const {
  if (a >= adjacency.size()) return false;
  return std::binary_search(adjacency[a].begin(), adjacency[a].end(), b);
}

namespace {

void sort_unique(std::vector<RoomId>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace

void validate(Layout& layout) {
  const std::size_t n = layout.rooms.size();
  if (n == 0) throw LayoutError("layout has no rooms");
  {
    std::set<std::string> seen(layout.rooms.begin(), layout.rooms.end());
    if (seen.size() != n) throw LayoutError("duplicate room id");
  }
  auto check_room = [n](RoomId r, const char* what) {
    if (r >= n) throw LayoutError(std::string(what) + " references an unknown room");
  };

  layout.adjacency.assign(n, {});
  for (const auto& [a, b] : layout.edges) {
    check_room(a, "edge");
    check_room(b, "edge");
    if (a == b) throw LayoutError("edge connects a room to itself");
    layout.adjacency[a].push_back(b);
    layout.adjacency[b].push_back(a);
  }
  for (auto& adj : layout.adjacency) sort_unique(adj);

  sort_unique(layout.victim_candidate_rooms);
  sort_unique(layout.rubble_rooms);
  for (RoomId r : layout.victim_candidate_rooms) check_room(r, "victim_room");
  for (RoomId r : layout.rubble_rooms) check_room(r, "rubble");
  if (layout.num_victims > layout.victim_candidate_rooms.size()) {
    throw LayoutError("victims exceeds the number of victim candidate rooms");
  }
  check_room(layout.medic_start, "start medic");
  if (layout.engineer_start) check_room(*layout.engineer_start, "start engineer");
  if (layout.max_steps < 1) throw LayoutError("max_steps must be at least 1");

  std::vector<bool> seen(n, false);
  std::deque<RoomId> frontier{0};
  seen[0] = true;
  std::size_t visited = 1;
  while (!frontier.empty()) {
    const RoomId r = frontier.front();
    frontier.pop_front();
    for (RoomId next : layout.adjacency[r]) {
      if (!seen[next]) {
        seen[next] = true;
        ++visited;
        frontier.push_back(next);
      }
    }
  }
  if (visited != n) throw LayoutError("room graph is not connected");
}

Layout load_layout(std::string_view text) {
  Layout layout;
  layout.max_steps = 0;
  bool saw_max_steps = false;

  // Rooms may be referenced before they are declared; resolve names at the end.
  struct Pending {
    std::size_t line;
    std::string kind;
    std::vector<std::string> args;
  };
  std::vector<Pending> refs;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto eol = text.find('\n', pos);
    const auto raw = text.substr(pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;

    const auto tokens = text::split_ws(text::trim(text::strip_comment(raw)));
    if (tokens.empty()) continue;
    const std::string_view key = tokens[0];
    auto fail = [line_no](const std::string& msg) -> LayoutError {
      return LayoutError("line " + std::to_string(line_no) + ": " + msg);
    };
    auto expect_args = [&](std::size_t count) {
      if (tokens.size() != count + 1) {
        throw fail("'" + std::string(key) + "' expects " + std::to_string(count) + " argument(s)");
      }
    };
    auto parse_count = [&](std::string_view v) {
      try {
        return text::parse_uint<std::size_t>(v);
      } catch (const std::invalid_argument& e) {
        throw fail(e.what());
      }
    };

    if (key == "room") {
      expect_args(1);
      layout.rooms.emplace_back(tokens[1]);
    } else if (key == "edge") {
      expect_args(2);
      refs.push_back({line_no, "edge", {std::string(tokens[1]), std::string(tokens[2])}});
    } else if (key == "victim_room" || key == "rubble") {
      expect_args(1);
      refs.push_back({line_no, std::string(key), {std::string(tokens[1])}});
    } else if (key == "victims") {
      expect_args(1);
      layout.num_victims = parse_count(tokens[1]);
    } else if (key == "start") {
      expect_args(2);
      if (tokens[1] != "medic" && tokens[1] != "engineer") {
        throw fail("start expects 'medic' or 'engineer'");
      }
      refs.push_back({line_no, "start " + std::string(tokens[1]), {std::string(tokens[2])}});
    } else if (key == "max_steps") {
      expect_args(1);
      layout.max_steps = parse_count(tokens[1]);
      saw_max_steps = true;
    } else {
      throw fail("unknown directive '" + std::string(key) + "'");
    }
  }

  bool saw_medic = false;
  for (const auto& ref : refs) {
    std::vector<RoomId> ids;
    for (const auto& name : ref.args) {
      const auto id = layout.find_room(name);
      if (!id) {
        throw LayoutError("line " + std::to_string(ref.line) + ": " + ref.kind +
                          " references unknown room '" + name + "'");
      }
      ids.push_back(*id);
    }
    if (ref.kind == "edge") {
      layout.edges.emplace_back(ids[0], ids[1]);
    } else if (ref.kind == "victim_room") {
      layout.victim_candidate_rooms.push_back(ids[0]);
    } else if (ref.kind == "rubble") {
      layout.rubble_rooms.push_back(ids[0]);
    } else if (ref.kind == "start medic") {
      layout.medic_start = ids[0];
      saw_medic = true;
    } else {
      layout.engineer_start = ids[0];
    }
  }
  if (!saw_medic) throw LayoutError("missing 'start medic'");
  if (!saw_max_steps) layout.max_steps = 50;
  validate(layout);
  return layout;
}

Layout load_layout_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LayoutError("cannot open layout file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return load_layout(buf.str());
  } catch (const LayoutError& e) {
    throw LayoutError(path.string() + ": " + e.what());
  }
}

std::string write_layout(const Layout& layout) {
  std::ostringstream out;
  for (const auto& r : layout.rooms) out << "room " << r << '\n';
  for (const auto& [a, b] : layout.edges) out << "edge " << layout.rooms[a] << ' ' << layout.rooms[b] << '\n';
  for (RoomId r : layout.victim_candidate_rooms) out << "victim_room " << layout.rooms[r] << '\n';
  for (RoomId r : layout.rubble_rooms) out << "rubble " << layout.rooms[r] << '\n';
  out << "victims " << layout.num_victims << '\n';
  out << "start medic " << layout.rooms[layout.medic_start] << '\n';
  if (layout.engineer_start) out << "start engineer " << layout.rooms[*layout.engineer_start] << '\n';
  out << "max_steps " << layout.max_steps << '\n';
  return out.str();
}

Layout single_agent_variant(Layout layout) {
  if (!layout.rubble_rooms.empty()) {
    throw LayoutError("single-agent variant requires a rubble-free layout");
  }
  layout.engineer_start.reset();
  return layout;
}

ActionId encode_action(const AgentAction& action) {
  switch (action.kind) {
    case AgentAction::Kind::NoOp: return kNoOp;
    case AgentAction::Kind::Heal: return kHeal;
    case AgentAction::Kind::ClearRubble: return kClearRubble;
    case AgentAction::Kind::MoveTo: return move_action(action.room);
  }
  return kNoOp;
}

AgentAction decode_action(ActionId id) {
  if (id == kNoOp) return AgentAction::noop();
  if (id == kHeal) return AgentAction::heal();
  if (id == kClearRubble) return AgentAction::clear_rubble();
  return AgentAction::move_to(id - 3);
}

std::size_t action_count(const Layout& layout) { return 3 + layout.rooms.size(); }

std::string action_name(const Layout& layout, ActionId id) {
  const auto a = decode_action(id);
  switch (a.kind) {
    case AgentAction::Kind::NoOp: return "noop";
    case AgentAction::Kind::Heal: return "heal";
    case AgentAction::Kind::ClearRubble: return "clear_rubble";
    case AgentAction::Kind::MoveTo:
      return a.room < layout.rooms.size() ? "move_to:" + layout.rooms[a.room] : "move_to:?";
  }
  return "?";
}

std::optional<std::size_t> FeatureSchema::index_of(std::string_view name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names.begin());
}

FeatureSchema feature_schema(const Layout& layout) {
  FeatureSchema schema;
  schema.names.emplace_back("medic_room");
  if (layout.multi_agent()) schema.names.emplace_back("engineer_room");
  for (RoomId r : layout.victim_candidate_rooms) schema.names.push_back("victim_present:" + layout.rooms[r]);
  for (RoomId r : layout.victim_candidate_rooms) schema.names.push_back("victim_healed:" + layout.rooms[r]);
  for (RoomId r : layout.rubble_rooms) schema.names.push_back("rubble:" + layout.rooms[r]);
  return schema;
}

EnvState reset(const Layout& layout, std::uint64_t seed) {
  const std::size_t n = layout.rooms.size();
  EnvState state;
  state.medic_room = layout.medic_start;
  state.engineer_room = layout.engineer_start;
  state.victim_status.assign(n, VictimStatus::Absent);
  state.rubble.assign(n, 0);
  for (RoomId r : layout.rubble_rooms) state.rubble[r] = 1;

  Rng rng(seed);
  std::vector<RoomId> candidates = layout.victim_candidate_rooms;
  std::shuffle(candidates.begin(), candidates.end(), rng);
  for (std::size_t i = 0; i < layout.num_victims; ++i) {
    state.victim_status[candidates[i]] = VictimStatus::PresentUnhealed;
  }
  return state;
}

std::size_t unhealed_victims(const EnvState& state) {
  return static_cast<std::size_t>(
      std::count(state.victim_status.begin(), state.victim_status.end(), VictimStatus::PresentUnhealed));
}

std::size_t rubble_count(const EnvState& state) {
  return static_cast<std::size_t>(std::count(state.rubble.begin(), state.rubble.end(), std::uint8_t{1}));
}

bool is_terminal(const Layout& layout, const EnvState& state) {
  return unhealed_victims(state) == 0 || state.step_count >= layout.max_steps;
}

StepOutcome step(const Layout& layout, const EnvState& state, std::span<const ActionId> actions) {
  if (is_terminal(layout, state)) throw std::logic_error("step called on a finished episode");
  if (actions.size() != layout.num_agents()) {
    throw std::invalid_argument("step expects one action per agent");
  }

  StepOutcome out{state, 0.0, false};
  EnvState& s = out.state;

  if (layout.multi_agent()) {
    const auto a = decode_action(actions[1]);
    RoomId& room = *s.engineer_room;
    if (a.kind == AgentAction::Kind::MoveTo && layout.adjacent(room, a.room)) {
      room = a.room;
    } else if (a.kind == AgentAction::Kind::ClearRubble) {
      s.rubble[room] = 0;
    }
  }

  const auto a = decode_action(actions[0]);
  if (a.kind == AgentAction::Kind::MoveTo && layout.adjacent(s.medic_room, a.room)) {
    s.medic_room = a.room;
  } else if (a.kind == AgentAction::Kind::Heal) {
    const RoomId r = s.medic_room;
    if (s.victim_status[r] == VictimStatus::PresentUnhealed && s.rubble[r] == 0) {
      s.victim_status[r] = VictimStatus::Healed;
      out.reward += kHealReward;
    }
  }

  ++s.step_count;
  out.done = is_terminal(layout, s);
  return out;
}

StateFeatures featurize(const EnvState& state, const Layout& layout, AgentRole /*agent*/) {
  // Fully observable: every agent sees the same vector.
  StateFeatures f;
  f.reserve(2 + 2 * layout.victim_candidate_rooms.size() + layout.rubble_rooms.size());
  f.push_back(static_cast<double>(state.medic_room));
  if (layout.multi_agent()) f.push_back(static_cast<double>(state.engineer_room.value_or(0)));
  for (RoomId r : layout.victim_candidate_rooms) {
    f.push_back(state.victim_status[r] == VictimStatus::PresentUnhealed ? 1.0 : 0.0);
  }
  for (RoomId r : layout.victim_candidate_rooms) {
    f.push_back(state.victim_status[r] == VictimStatus::Healed ? 1.0 : 0.0);
  }
  for (RoomId r : layout.rubble_rooms) f.push_back(state.rubble[r] ? 1.0 : 0.0);
  return f;
}

std::vector<ActionId> valid_actions(const Layout& layout, const EnvState& state, AgentRole agent) {
  std::vector<ActionId> out{kNoOp};
  RoomId room = state.medic_room;
  if (agent == AgentRole::Medic) {
    out.push_back(kHeal);
  } else {
    out.push_back(kClearRubble);
    room = state.engineer_room.value_or(0);
  }
  for (RoomId next : layout.adjacency[room]) out.push_back(move_action(next));
  return out;
}

std::vector<EnvState> reachable_states(const Layout& layout) {
  // step_count is normalised to 0: the enumeration is over configurations,
  // not over time-indexed states.
  std::set<EnvState> seen;
  std::deque<EnvState> frontier;

  const auto& cand = layout.victim_candidate_rooms;
  const std::size_t k = layout.num_victims;
  std::vector<bool> choose(cand.size(), false);
  std::fill(choose.begin(), choose.begin() + static_cast<std::ptrdiff_t>(k), true);
  do {
    EnvState s = reset(layout, 0);
    std::fill(s.victim_status.begin(), s.victim_status.end(), VictimStatus::Absent);
    for (std::size_t i = 0; i < cand.size(); ++i) {
      if (choose[i]) s.victim_status[cand[i]] = VictimStatus::PresentUnhealed;
    }
    if (seen.insert(s).second) frontier.push_back(s);
  } while (std::prev_permutation(choose.begin(), choose.end()));

  const auto agents = layout.agents();
  while (!frontier.empty()) {
    const EnvState s = frontier.front();
    frontier.pop_front();
    if (unhealed_victims(s) == 0) continue;

    std::vector<std::vector<ActionId>> per_agent;
    for (AgentRole role : agents) per_agent.push_back(valid_actions(layout, s, role));
    std::vector<std::size_t> idx(agents.size(), 0);
    while (true) {
      std::vector<ActionId> joint;
      for (std::size_t i = 0; i < agents.size(); ++i) joint.push_back(per_agent[i][idx[i]]);
      EnvState probe = s;
      probe.step_count = 0;
      EnvState next = step(layout, probe, joint).state;
      next.step_count = 0;
      if (seen.insert(next).second) frontier.push_back(std::move(next));

      std::size_t i = 0;
      while (i < idx.size() && ++idx[i] == per_agent[i].size()) idx[i++] = 0;
      if (i == idx.size()) break;
    }
  }
  return {seen.begin(), seen.end()};
}

EvalResult evaluate_policy(const Layout& layout, const JointPolicy& policy, std::size_t episodes,
                           std::uint64_t seed) {
  if (episodes == 0) return {};
  const auto agents = layout.agents();
  double total_reward = 0.0;
  double total_length = 0.0;
  std::vector<ActionId> joint(agents.size());
  for (std::size_t e = 0; e < episodes; ++e) {
    EnvState s = reset(layout, derive_seed(seed, e));
    while (!is_terminal(layout, s)) {
      for (std::size_t i = 0; i < agents.size(); ++i) {
        const auto valid = valid_actions(layout, s, agents[i]);
        joint[i] = policy(i, featurize(s, layout, agents[i]), valid);
      }
      auto out = step(layout, s, joint);
      total_reward += out.reward;
      s = std::move(out.state);
    }
    total_length += static_cast<double>(s.step_count);
  }
  return {total_reward / static_cast<double>(episodes), total_length / static_cast<double>(episodes)};
}

}  // namespace eaa
