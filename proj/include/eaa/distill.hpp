#pragma once

// Iterative policy extraction: DAgger-style rollouts relabelled by the
// teacher, loss-weighted resampling, CART fitting and best-candidate
// selection by environment reward.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "eaa/dtree.hpp"
#include "eaa/gridworld.hpp"
#include "eaa/random.hpp"
#include "eaa/tabular_rl.hpp"

namespace eaa {

struct DistillConfig {
  std::size_t iterations = 10;
  std::size_t rollouts = 20;  // per iteration
  std::size_t resample_size = 5000;
  std::size_t max_depth = 12;
  std::size_t min_samples_split = 2;
  std::size_t eval_episodes = 50;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const DistillConfig&) const = default;
};

struct WeightedRecord {
  StateFeatures features;
  ActionId action = 0;  // teacher's greedy action
  double weight = 0.0;  // viper_loss of the teacher's row at `features`
};

using WeightedDataset = std::vector<WeightedRecord>;

/// V(s) - min_a Q(s,a) with V(s) = max_a Q(s,a).
double viper_loss(std::span<const double> q_row);

/// Runs `episodes` episodes and labels every visited state with each agent's
/// teacher greedy action. Agents act with the teacher when `rollout_trees` is
/// empty, otherwise with the trees. Returns one dataset per agent.
std::vector<WeightedDataset> sample_trajectories(const Layout& layout, const std::vector<QTable>& teacher,
                                                 std::span<const DecisionTreePolicy> rollout_trees,
                                                 std::size_t episodes, std::uint64_t seed);

/// Draws `size` records with replacement, proportional to weight; uniform
/// when every weight is zero. Throws std::invalid_argument on empty input.
std::vector<Sample> resample(const WeightedDataset& dataset, std::size_t size, Rng& rng);

struct DistillCandidate {
  std::size_t iteration = 0;
  std::vector<DecisionTreePolicy> trees;  // one per agent
  double score = 0.0;                     // mean greedy episode reward
  std::size_t dataset_size = 0;           // aggregated records before resampling
};

struct DistillResult {
  std::vector<DistillCandidate> candidates;
  std::size_t selected = 0;  // index into candidates

  const std::vector<DecisionTreePolicy>& trees() const { return candidates[selected].trees; }
  double score() const { return candidates[selected].score; }
};

JointPolicy tree_policy(std::span<const DecisionTreePolicy> trees);

DistillResult viper(const Layout& layout, const std::vector<QTable>& teacher, const DistillConfig& config);

/// Fraction of (state, agent) pairs on teacher greedy rollouts where the tree
/// predicts the teacher's greedy action.
double action_agreement(const Layout& layout, const std::vector<QTable>& teacher,
                        std::span<const DecisionTreePolicy> trees, std::size_t episodes, std::uint64_t seed);

}  // namespace eaa
