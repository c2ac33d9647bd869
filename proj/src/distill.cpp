#include "eaa/distill.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <stdexcept>

namespace eaa {

void DistillConfig::validate() const {
  if (iterations < 1 || rollouts < 1 || resample_size < 1 || max_depth < 1 || eval_episodes < 1) {
    throw std::invalid_argument("distill counts must all be >= 1");
  }
}

double viper_loss(std::span<const double> q_row) {
  if (q_row.empty()) throw std::invalid_argument("viper_loss: empty row");
  const auto [lo, hi] = std::minmax_element(q_row.begin(), q_row.end());
  return *hi - *lo;
}

namespace {

std::vector<double> valid_row(const QTable& table, const StateFeatures& s, std::span<const ActionId> valid) {
  const auto row = table.row(s);
  std::vector<double> out;
  out.reserve(valid.size());
  for (ActionId a : valid) out.push_back(row[a]);
  return out;
}

}  // namespace

std::vector<WeightedDataset> sample_trajectories(const Layout& layout, const std::vector<QTable>& teacher,
                                                 std::span<const DecisionTreePolicy> rollout_trees,
                                                 std::size_t episodes, std::uint64_t seed) {
  const auto agents = layout.agents();
  if (teacher.size() != agents.size()) throw std::invalid_argument("one teacher table per agent required");
  if (!rollout_trees.empty() && rollout_trees.size() != agents.size()) {
    throw std::invalid_argument("one rollout tree per agent required");
  }
  std::vector<WeightedDataset> out(agents.size());
  std::vector<ActionId> joint(agents.size());
  for (std::size_t e = 0; e < episodes; ++e) {
    EnvState s = reset(layout, derive_seed(seed, e));
    while (!is_terminal(layout, s)) {
      for (std::size_t i = 0; i < agents.size(); ++i) {
        auto f = featurize(s, layout, agents[i]);
        const auto valid = valid_actions(layout, s, agents[i]);
        const ActionId label = greedy_action(teacher[i], f, valid);
        const double weight = viper_loss(valid_row(teacher[i], f, valid));
        joint[i] = rollout_trees.empty() ? label : predict(rollout_trees[i], f).action;
        out[i].push_back({std::move(f), label, weight});
      }
      s = step(layout, s, joint).state;
    }
  }
  return out;
}

std::vector<Sample> resample(const WeightedDataset& dataset, std::size_t size, Rng& rng) {
  if (dataset.empty()) throw std::invalid_argument("resample: empty dataset");
  std::vector<double> weights;
  weights.reserve(dataset.size());
  bool any_positive = false;
  for (const auto& r : dataset) {
    if (!(r.weight >= 0.0) || r.weight == std::numeric_limits<double>::infinity()) {
      throw std::invalid_argument("resample: weights must be finite and non-negative");
    }
    any_positive = any_positive || r.weight > 0.0;
    weights.push_back(r.weight);
  }
  if (!any_positive) std::fill(weights.begin(), weights.end(), 1.0);

  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::vector<Sample> out;
  out.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    const auto& r = dataset[pick(rng)];
    out.push_back({r.features, r.action});
  }
  return out;
}

JointPolicy tree_policy(std::span<const DecisionTreePolicy> trees) {
  return [trees](std::size_t agent, const StateFeatures& s, std::span<const ActionId>) {
    return predict(trees[agent], s).action;
  };
}

DistillResult viper(const Layout& layout, const std::vector<QTable>& teacher, const DistillConfig& config) {
  config.validate();
  const auto agents = layout.agents();
  const auto names = feature_schema(layout).names;
  const CartParams cart{config.max_depth, config.min_samples_split};

  DistillResult result;
  std::vector<WeightedDataset> aggregate(agents.size());
  Rng rng(derive_seed(config.seed, 0));
  const std::uint64_t eval_seed = derive_seed(config.seed, 1);

  for (std::size_t it = 0; it < config.iterations; ++it) {
    std::span<const DecisionTreePolicy> rollout;
    if (it > 0) rollout = result.candidates.back().trees;
    auto fresh = sample_trajectories(layout, teacher, rollout, config.rollouts, derive_seed(config.seed, 2, it));

    DistillCandidate cand;
    cand.iteration = it;
    for (std::size_t i = 0; i < agents.size(); ++i) {
      aggregate[i].insert(aggregate[i].end(), std::make_move_iterator(fresh[i].begin()),
                          std::make_move_iterator(fresh[i].end()));
      cand.dataset_size += aggregate[i].size();
      const auto samples = resample(aggregate[i], config.resample_size, rng);
      cand.trees.push_back(fit_cart(samples, cart, names));
    }
    cand.score = evaluate_policy(layout, tree_policy(cand.trees), config.eval_episodes, eval_seed).mean_reward;
    result.candidates.push_back(std::move(cand));
  }

  for (std::size_t c = 1; c < result.candidates.size(); ++c) {
    if (result.candidates[c].score > result.candidates[result.selected].score) result.selected = c;
  }
  return result;
}

double action_agreement(const Layout& layout, const std::vector<QTable>& teacher,
                        std::span<const DecisionTreePolicy> trees, std::size_t episodes, std::uint64_t seed) {
  const auto visited = sample_trajectories(layout, teacher, {}, episodes, seed);
  std::size_t total = 0;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < visited.size(); ++i) {
    for (const auto& r : visited[i]) {
      ++total;
      if (predict(trees[i], r.features).action == r.action) ++agree;
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(agree) / static_cast<double>(total);
}

}  // namespace eaa
