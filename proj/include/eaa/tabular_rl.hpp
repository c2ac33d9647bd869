#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "eaa/gridworld.hpp"
#include "eaa/random.hpp"

namespace eaa {

enum class Algorithm { QLearning, Sarsa };

/// Hyperparameters for the tabular learners.
///
/// Defaults: learning_rate 0.1, discount 0.95, epsilon decays linearly from
/// 1.0 to 0.05 over the first 60% of `episodes`. Setting `epsilon_decay`
/// overrides the derived per-episode decrement.
struct LearnerConfig {
  Algorithm algorithm = Algorithm::QLearning;
  double learning_rate = 0.1;
  double discount = 0.95;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_decay_fraction = 0.6;
  std::optional<double> epsilon_decay;  // per episode
  std::size_t episodes = 3000;

  void validate() const;
  double epsilon_at(std::size_t episode) const;

  bool operator==(const LearnerConfig&) const = default;
};

/// Action-value table keyed by exact feature vectors. Every row has one
/// entry per layout action id; only valid actions are ever read or written.
class QTable {
 public:
  using Key = StateFeatures;
  using Row = std::vector<double>;
  using RowInitializer = std::function<Row(const Key&)>;

  explicit QTable(std::size_t num_actions = 0, double default_value = 0.0);

  std::size_t num_actions() const { return num_actions_; }
  double default_value() const { return default_value_; }
  std::size_t size() const { return rows_.size(); }
  bool contains(const Key& key) const { return rows_.count(key) != 0; }

  double value(const Key& key, ActionId action) const;
  /// Stored row, or the initial row for an unseen key. Never mutates.
  Row row(const Key& key) const;
  Row& mutable_row(const Key& key);

  /// Initial values for unseen keys (warm starts). Not serialized.
  void set_row_initializer(RowInitializer init) { init_ = std::move(init); }

  const std::map<Key, Row>& rows() const { return rows_; }

  bool operator==(const QTable& other) const {
    return num_actions_ == other.num_actions_ && default_value_ == other.default_value_ &&
           rows_ == other.rows_;
  }

 private:
  std::size_t num_actions_;
  double default_value_;
  std::map<Key, Row> rows_;
  RowInitializer init_;
};

/// One-step Q-learning backup:
/// Q(s,a) += lr * (r + discount * max_{a' valid} Q(s',a') * (1 - done) - Q(s,a)).
void q_update(QTable& table, const StateFeatures& s, ActionId a, double reward,
              const StateFeatures& s_next, bool done, std::span<const ActionId> next_valid,
              const LearnerConfig& config);

void sarsa_update(QTable& table, const StateFeatures& s, ActionId a, double reward,
                  const StateFeatures& s_next, ActionId a_next, bool done, const LearnerConfig& config);

/// argmax over `valid`, lowest action id wins ties.
ActionId greedy_action(const QTable& table, const StateFeatures& s, std::span<const ActionId> valid);

/// Uniform over `valid` with probability epsilon, otherwise greedy.
/// Throws std::invalid_argument on an empty action set.
ActionId act_epsilon_greedy(const QTable& table, const StateFeatures& s, std::span<const ActionId> valid,
                            double epsilon, Rng& rng);

/// max_a Q(s,a) - min_a Q(s,a) over the valid actions.
double importance(const QTable& table, const StateFeatures& s, std::span<const ActionId> valid);

struct Transition {
  StateFeatures state;
  ActionId action = 0;
  double reward = 0.0;
  StateFeatures next_state;
  std::vector<ActionId> next_valid;
  ActionId next_action = 0;  // SARSA only; meaningless when done
  bool done = false;
};

/// Applies the configured backup to each transition in order.
void learn_episode(QTable& table, std::span<const Transition> episode, const LearnerConfig& config);

JointPolicy greedy_policy(const std::vector<QTable>& tables);

struct TeacherModel {
  std::vector<QTable> tables;  // one per agent, Layout::agents() order
  double eval_reward = 0.0;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, double eval_reward)
      : std::runtime_error(what), eval_reward_(eval_reward) {}
  double eval_reward() const { return eval_reward_; }

 private:
  double eval_reward_;
};

/// Independent learners on the shared team reward. Throws TrainingError if
/// the greedy evaluation reward is below `min_fraction` of the layout optimum.
TeacherModel train_teacher(const Layout& layout, const LearnerConfig& config, std::uint64_t seed,
                           std::size_t eval_episodes = 100, double min_fraction = 0.95);

// Text format, round-trip exact:
//   eaa-qtable v1
//   actions <n> default <v> rows <k>
//   <f_0> ... <f_m-1> | <q_0> ... <q_n-1>      (k lines, keys ascending)
void write_qtable(std::ostream& out, const QTable& table);
QTable read_qtable(std::istream& in);

//   eaa-qtables v1 <count>   followed by <count> qtable blocks
void write_qtables(std::ostream& out, std::span<const QTable> tables);
std::vector<QTable> read_qtables(std::istream& in);

}  // namespace eaa
