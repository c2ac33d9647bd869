#include "eaa/tabular_rl.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "eaa/text.hpp"

namespace eaa {

void LearnerConfig::validate() const {
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
    throw std::invalid_argument("learning_rate must be in (0, 1]");
  }
  if (!(discount > 0.0 && discount <= 1.0)) throw std::invalid_argument("discount must be in (0, 1]");
  if (epsilon_start < 0.0 || epsilon_start > 1.0 || epsilon_end < 0.0 || epsilon_end > 1.0) {
    throw std::invalid_argument("epsilon bounds must be in [0, 1]");
  }
  if (epsilon_decay && *epsilon_decay < 0.0) throw std::invalid_argument("epsilon_decay must be >= 0");
  if (!(epsilon_decay_fraction > 0.0 && epsilon_decay_fraction <= 1.0)) {
    throw std::invalid_argument("epsilon_decay_fraction must be in (0, 1]");
  }
  if (episodes < 1) throw std::invalid_argument("episodes must be >= 1");
}

double LearnerConfig::epsilon_at(std::size_t episode) const {
  double decay = 0.0;
  if (epsilon_decay) {
    decay = *epsilon_decay;
  } else {
    const double span = std::max(1.0, epsilon_decay_fraction * static_cast<double>(episodes));
    if (static_cast<double>(episode) >= span) return epsilon_end;
    decay = (epsilon_start - epsilon_end) / span;
  }
  const double eps = epsilon_start - decay * static_cast<double>(episode);
  return std::max(epsilon_end, eps);
}

QTable::QTable(std::size_t num_actions, double default_value)
    : num_actions_(num_actions), default_value_(default_value) {}

double QTable::value(const Key& key, ActionId action) const {
  if (action >= num_actions_) throw std::out_of_range("action id outside the table");
  const auto it = rows_.find(key);
  if (it != rows_.end()) return it->second[action];
  if (init_) return init_(key)[action];
  return default_value_;
}

QTable::Row QTable::row(const Key& key) const {
  const auto it = rows_.find(key);
  if (it != rows_.end()) return it->second;
  if (init_) return init_(key);
  return Row(num_actions_, default_value_);
}

QTable::Row& QTable::mutable_row(const Key& key) {
  auto it = rows_.find(key);
  if (it == rows_.end()) {
    Row fresh = init_ ? init_(key) : Row(num_actions_, default_value_);
    it = rows_.emplace(key, std::move(fresh)).first;
  }
  return it->second;
}

namespace {

double max_over(const QTable::Row& row, std::span<const ActionId> valid) {
  double best = row[valid.front()];
  for (ActionId a : valid) best = std::max(best, row[a]);
  return best;
}

}  // namespace

void q_update(QTable& table, const StateFeatures& s, ActionId a, double reward, const StateFeatures& s_next,
              bool done, std::span<const ActionId> next_valid, const LearnerConfig& config) {
  if (config.learning_rate == 0.0) return;
  double target = reward;
  if (!done && !next_valid.empty()) target += config.discount * max_over(table.row(s_next), next_valid);
  double& q = table.mutable_row(s)[a];
  q += config.learning_rate * (target - q);
}

void sarsa_update(QTable& table, const StateFeatures& s, ActionId a, double reward, const StateFeatures& s_next,
                  ActionId a_next, bool done, const LearnerConfig& config) {
  if (config.learning_rate == 0.0) return;
  double target = reward;
  if (!done) target += config.discount * table.value(s_next, a_next);
  double& q = table.mutable_row(s)[a];
  q += config.learning_rate * (target - q);
}

ActionId greedy_action(const QTable& table, const StateFeatures& s, std::span<const ActionId> valid) {
  if (valid.empty()) throw std::invalid_argument("greedy_action: empty action set");
  const auto row = table.row(s);
  ActionId best = valid.front();
  for (ActionId a : valid) {
    if (row[a] > row[best] || (row[a] == row[best] && a < best)) best = a;
  }
  return best;
}

ActionId act_epsilon_greedy(const QTable& table, const StateFeatures& s, std::span<const ActionId> valid,
                            double epsilon, Rng& rng) {
  if (valid.empty()) throw std::invalid_argument("act_epsilon_greedy: empty action set");
  if (uniform01(rng) < epsilon) return valid[uniform_index(rng, valid.size())];
  return greedy_action(table, s, valid);
}

double importance(const QTable& table, const StateFeatures& s, std::span<const ActionId> valid) {
  if (valid.empty()) throw std::invalid_argument("importance: empty action set");
  const auto row = table.row(s);
  double hi = row[valid.front()];
  double lo = hi;
  for (ActionId a : valid) {
    hi = std::max(hi, row[a]);
    lo = std::min(lo, row[a]);
  }
  return hi - lo;
}

void learn_episode(QTable& table, std::span<const Transition> episode, const LearnerConfig& config) {
  for (const auto& t : episode) {
    if (config.algorithm == Algorithm::QLearning) {
      q_update(table, t.state, t.action, t.reward, t.next_state, t.done, t.next_valid, config);
    } else {
      sarsa_update(table, t.state, t.action, t.reward, t.next_state, t.next_action, t.done, config);
    }
  }
}

JointPolicy greedy_policy(const std::vector<QTable>& tables) {
  return [&tables](std::size_t agent, const StateFeatures& s, std::span<const ActionId> valid) {
    return greedy_action(tables[agent], s, valid);
  };
}

TeacherModel train_teacher(const Layout& layout, const LearnerConfig& config, std::uint64_t seed,
                           std::size_t eval_episodes, double min_fraction) {
  config.validate();
  const auto agents = layout.agents();
  const std::size_t n = agents.size();

  TeacherModel model;
  model.tables.assign(n, QTable(action_count(layout)));
  Rng explore(derive_seed(seed, 1));

  std::vector<std::vector<Transition>> episode(n);
  std::vector<ActionId> joint(n);
  std::vector<StateFeatures> features(n);
  std::vector<std::vector<ActionId>> valid(n);

  for (std::size_t e = 0; e < config.episodes; ++e) {
    const double eps = config.epsilon_at(e);
    for (auto& ep : episode) ep.clear();
    EnvState s = reset(layout, derive_seed(seed, 2, e));
    for (std::size_t i = 0; i < n; ++i) {
      features[i] = featurize(s, layout, agents[i]);
      valid[i] = valid_actions(layout, s, agents[i]);
    }
    while (!is_terminal(layout, s)) {
      for (std::size_t i = 0; i < n; ++i) {
        joint[i] = act_epsilon_greedy(model.tables[i], features[i], valid[i], eps, explore);
      }
      auto out = step(layout, s, joint);
      for (std::size_t i = 0; i < n; ++i) {
        Transition t;
        t.state = std::move(features[i]);
        t.action = joint[i];
        t.reward = out.reward;
        features[i] = featurize(out.state, layout, agents[i]);
        valid[i] = valid_actions(layout, out.state, agents[i]);
        t.next_state = features[i];
        t.next_valid = valid[i];
        t.done = out.done;
        if (!episode[i].empty()) episode[i].back().next_action = t.action;
        episode[i].push_back(std::move(t));
      }
      s = std::move(out.state);
    }
    for (std::size_t i = 0; i < n; ++i) learn_episode(model.tables[i], episode[i], config);
  }

  model.eval_reward = evaluate_policy(layout, greedy_policy(model.tables), eval_episodes, derive_seed(seed, 3)).mean_reward;
  const double optimum = layout.optimal_reward();
  if (model.eval_reward < min_fraction * optimum) {
    throw TrainingError("teacher did not converge after " + std::to_string(config.episodes) +
                            " episodes: greedy evaluation reward " + text::format_double(model.eval_reward) +
                            " (optimum " + text::format_double(optimum) + ")",
                        model.eval_reward);
  }
  return model;
}

void write_qtable(std::ostream& out, const QTable& table) {
  out << "eaa-qtable v1\n";
  out << "actions " << table.num_actions() << " default " << text::format_double(table.default_value())
      << " rows " << table.size() << '\n';
  for (const auto& [key, row] : table.rows()) {
    for (double f : key) out << text::format_double(f) << ' ';
    out << '|';
    for (double q : row) out << ' ' << text::format_double(q);
    out << '\n';
  }
}

QTable read_qtable(std::istream& in) {
  std::string line;
  auto next_line = [&]() {
    if (!std::getline(in, line)) throw std::runtime_error("qtable: unexpected end of input");
    return text::trim(line);
  };
  if (next_line() != "eaa-qtable v1") throw std::runtime_error("qtable: bad header");
  const auto hdr = text::split_ws(next_line());
  if (hdr.size() != 6 || hdr[0] != "actions" || hdr[2] != "default" || hdr[4] != "rows") {
    throw std::runtime_error("qtable: bad size line");
  }
  QTable table(text::parse_uint<std::size_t>(hdr[1]), text::parse_double(hdr[3]));
  const auto rows = text::parse_uint<std::size_t>(hdr[5]);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto tokens = text::split_ws(next_line());
    const auto bar = std::find(tokens.begin(), tokens.end(), "|");
    if (bar == tokens.end()) throw std::runtime_error("qtable: row without separator");
    QTable::Key key;
    for (auto it = tokens.begin(); it != bar; ++it) key.push_back(text::parse_double(*it));
    QTable::Row row;
    for (auto it = bar + 1; it != tokens.end(); ++it) row.push_back(text::parse_double(*it));
    if (row.size() != table.num_actions()) throw std::runtime_error("qtable: row width mismatch");
    table.mutable_row(key) = std::move(row);
  }
  return table;
}

void write_qtables(std::ostream& out, std::span<const QTable> tables) {
  out << "eaa-qtables v1 " << tables.size() << '\n';
  for (const auto& t : tables) write_qtable(out, t);
}

std::vector<QTable> read_qtables(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("qtables: empty input");
  const auto hdr = text::split_ws(text::trim(line));
  if (hdr.size() != 3 || hdr[0] != "eaa-qtables" || hdr[1] != "v1") {
    throw std::runtime_error("qtables: bad header");
  }
  const auto count = text::parse_uint<std::size_t>(hdr[2]);
  std::vector<QTable> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(read_qtable(in));
  return out;
}

}  // namespace eaa
