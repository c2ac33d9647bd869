// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "eaa/advising.hpp"
#include "eaa/distill.hpp"
#include "eaa/dtree.hpp"
#include "eaa/gridworld.hpp"
#include "eaa/harness.hpp"
#include "eaa/random.hpp"
#include "eaa/tabular_rl.hpp"

using namespace eaa;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = EAA_SOURCE_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

template <typename T>
std::string list(const std::vector<T>& v, const std::function<std::string(const T&)>& f) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + f(v[i]);
  return s + "]";
}

std::string opt_str(const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : "never"; }

ExperimentConfig four_room_config() { return load_config(kSource / "configs/four_room.cfg"); }

// The four-room teacher and tree are shared by criteria 1, 2 and 8.
const Artifacts& four_room_artifacts() {
  static const Artifacts a = prepare_artifacts(four_room_config());
  return a;
}

double final_mean(const std::vector<EpisodeRecord>& t, std::size_t last) {
  const std::size_t from = t.size() > last ? t.size() - last : 0;
  double s = 0.0;
  for (std::size_t e = from; e < t.size(); ++e) s += t[e].reward;
  return s / static_cast<double>(t.size() - from);
}

Outcome teacher_optimality() {
  const auto cfg = four_room_config();
  const auto t0 = std::chrono::steady_clock::now();
  const Layout layout = load_env(cfg.layout, cfg.variant);
  const auto teacher = train_teacher(layout, cfg.teacher_learner, cfg.teacher_seed, 100, 0.0);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double r = teacher.eval_reward;
  return {std::abs(r - 10.0) <= 0.5 && secs < 120.0,
          "teacher greedy reward " + fmt(r) + " over 100 episodes in " + fmt(secs, 2) + "s"};
}

Outcome distillation_fidelity() {
  const auto& a = four_room_artifacts();
  const auto cfg = four_room_config();
  const auto tree_reward = evaluate_policy(a.target, tree_policy(a.trees), 100, derive_seed(cfg.distill.seed, 77)).mean_reward;
  const double agree = action_agreement(a.target, a.teacher, a.trees, 100, derive_seed(cfg.distill.seed, 78));
  return {std::abs(tree_reward - 10.0) <= 0.5 && agree >= 0.95,
          "tree reward " + fmt(tree_reward) + ", action agreement " + fmt(agree, 4) + " over 100 teacher rollouts"};
}

Outcome reconstruction_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  const Layout layout = load_env(kSource / "layouts/four_room_single.layout", EnvVariant::SingleAgent);
  const auto teacher = train_teacher(layout, LearnerConfig{}, 7, 100);
  DistillConfig dc;
  dc.seed = 11;
  const auto tree = viper(layout, teacher.tables, dc).trees()[0];

  std::vector<StateFeatures> states;
  for (const auto& s : reachable_states(layout)) states.push_back(featurize(s, layout, AgentRole::Medic));

  std::size_t checked = 0;
  std::size_t stored_states = 0;
  std::size_t undecided = 0;
  bool ok = true;
  for (double fraction : {0.0, 0.1, 0.5, 1.0}) {
    Rng rng(derive_seed(31, static_cast<std::uint64_t>(fraction * 100)));
    PartialTree partial = PartialTree::of(tree);
    std::vector<bool> stored(states.size(), false);
    for (std::size_t i = 0; i < states.size(); ++i) {
      if (uniform01(rng) < fraction) {
        store_path(partial, extract_path(tree, states[i]));
        stored[i] = true;
      }
    }
    for (std::size_t i = 0; i < states.size(); ++i) {
      const auto truth = predict(tree, states[i]);
      const auto got = query_partial(partial, states[i]);
      ++checked;
      if (stored[i]) {
        ++stored_states;
        ok = ok && got && *got == truth;
      } else if (!got) {
        ++undecided;
      } else {
        ok = ok && *got == truth;
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {ok && secs < 60.0, std::to_string(states.size()) + " reachable states x 4 coverage levels, " +
                                 std::to_string(stored_states) + " stored checks, " + std::to_string(undecided) +
                                 " undecided, 0 contradictions required, " + fmt(secs, 2) + "s"};
}

bool subtree_of(const PartialTree& p, const DecisionTreePolicy& tree) {
  for (const auto& [id, node] : p.nodes()) {
    if (id >= tree.nodes().size()) return false;
    const auto& src = tree.node(id);
    if (const auto* in = std::get_if<PartialTree::Internal>(&node)) {
      if (src.is_leaf()) return false;
      const auto& s = src.internal();
      if (in->feature != s.feature || in->threshold != s.threshold) return false;
      if (in->left && (*in->left != s.left || !p.contains(*in->left))) return false;
      if (in->right && (*in->right != s.right || !p.contains(*in->right))) return false;
    } else {
      const auto& lf = std::get<PartialTree::Leaf>(node);
      if (!src.is_leaf() || lf.action != src.leaf().action || lf.probability != src.leaf().probability) return false;
    }
  }
  return true;
}

Outcome merge_algebra() {
  const std::size_t sequences = 1200;
  std::size_t idem = 0;
  std::size_t comm = 0;
  std::size_t sub = 0;
  for (std::size_t k = 0; k < sequences; ++k) {
    Rng rng(derive_seed(4242, k));
    const std::size_t nf = 2 + uniform_index(rng, 4);
    const std::size_t na = 2 + uniform_index(rng, 4);
    std::vector<Sample> data;
    for (std::size_t i = 0; i < 60; ++i) {
      Sample s;
      for (std::size_t f = 0; f < nf; ++f) s.features.push_back(static_cast<double>(uniform_index(rng, 4)));
      s.action = static_cast<ActionId>(uniform_index(rng, na));
      data.push_back(std::move(s));
    }
    const auto tree = fit_cart(data, CartParams{1 + uniform_index(rng, 6), 2});

    std::vector<DecisionPath> paths;
    const std::size_t len = 1 + uniform_index(rng, 8);
    for (std::size_t i = 0; i < len; ++i) paths.push_back(extract_path(tree, data[uniform_index(rng, data.size())].features));

    PartialTree forward = PartialTree::of(tree);
    for (const auto& p : paths) store_path(forward, p);
    PartialTree twice = forward;
    for (const auto& p : paths) store_path(twice, p);
    idem += twice == forward;

    auto shuffled = paths;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    PartialTree permuted = PartialTree::of(tree);
    for (const auto& p : shuffled) store_path(permuted, p);
    PartialTree ab = PartialTree::of(tree);
    PartialTree ba = PartialTree::of(tree);
    store_path(ab, paths.front());
    store_path(ab, paths.back());
    store_path(ba, paths.back());
    store_path(ba, paths.front());
    comm += permuted == forward && ab == ba;

    sub += subtree_of(forward, tree);
  }
  const bool ok = idem == sequences && comm == sequences && sub == sequences;
  return {ok, std::to_string(sequences) + " random sequences: idempotent " + std::to_string(idem) + ", commutative " +
                  std::to_string(comm) + ", sub-tree " + std::to_string(sub)};
}

Outcome sample_efficiency() {
  auto cfg = four_room_config();
  cfg.advising.budget = 20;
  cfg.eval_cadence = 1;
  cfg.episodes = 1000;
  std::cout << "  overrides: advising.budget=20 experiment.eval_cadence=1 experiment.episodes=1000\n";
  const auto& a = four_room_artifacts();
  const double threshold = 0.9 * a.teacher_reward;

  std::vector<std::vector<double>> reach;
  for (auto mode : {StudentMode::EAA, StudentMode::AA, StudentMode::None}) {
    std::vector<double> v;
    for (const auto& t : run_trials(cfg, a, mode, cfg.seeds)) {
      const auto e = episodes_to_reach(t, threshold);
      v.push_back(e ? static_cast<double>(*e) : std::numeric_limits<double>::infinity());
    }
    reach.push_back(v);
  }
  std::size_t eaa_lt_aa = 0;
  std::size_t aa_lt_none = 0;
  for (std::size_t k = 0; k < cfg.seeds.size(); ++k) {
    eaa_lt_aa += reach[0][k] < reach[1][k];
    aa_lt_none += reach[1][k] < reach[2][k];
  }
  const auto show = [](const double& d) { return std::isinf(d) ? std::string("never") : fmt(d, 0); };
  return {eaa_lt_aa >= 4 && aa_lt_none >= 4,
          "episodes to " + fmt(threshold, 2) + ": eaa " + list<double>(reach[0], show) + " aa " +
              list<double>(reach[1], show) + " none " + list<double>(reach[2], show) + "; eaa<aa " +
              std::to_string(eaa_lt_aa) + "/5, aa<none " + std::to_string(aa_lt_none) + "/5"};
}

Outcome exhaustion_delay() {
  const auto& a = four_room_artifacts();
  const std::vector<Heuristic> heuristics{EarlyAdvising{}, AlternativeAdvising{}, ImportanceAdvising{},
                                          MistakeCorrecting{}};
  bool ok = true;
  std::string detail;
  for (const auto& h : heuristics) {
    auto cfg = four_room_config();
    cfg.advising.heuristic = h;
    std::vector<std::optional<std::size_t>> eaa;
    std::vector<std::optional<std::size_t>> aa;
    for (const auto& t : run_trials(cfg, a, StudentMode::EAA, cfg.seeds)) eaa.push_back(exhaustion_episode(t));
    for (const auto& t : run_trials(cfg, a, StudentMode::AA, cfg.seeds)) aa.push_back(exhaustion_episode(t));
    std::size_t later = 0;
    for (std::size_t k = 0; k < eaa.size(); ++k) {
      // A budget that is never spent counts as exhausting at infinity.
      const double e = eaa[k] ? double(*eaa[k]) : std::numeric_limits<double>::infinity();
      const double b = aa[k] ? double(*aa[k]) : std::numeric_limits<double>::infinity();
      later += e >= b;
    }
    ok = ok && later >= 4;
    detail += (detail.empty() ? "" : "; ") + heuristic_name(h) + " eaa " +
              list<std::optional<std::size_t>>(eaa, opt_str) + " aa " + list<std::optional<std::size_t>>(aa, opt_str) +
              " (" + std::to_string(later) + "/5)";
  }
  return {ok, detail};
}

Outcome transfer_rejection() {
  const auto cfg = load_config(kSource / "configs/transfer.cfg");
  const auto a = prepare_artifacts(cfg);
  std::vector<double> means;
  std::string detail;
  for (auto mode : {StudentMode::EAA, StudentMode::EAAAlwaysAccept, StudentMode::WarmStart}) {
    std::vector<double> per_seed;
    for (const auto& t : run_trials(cfg, a, mode, cfg.seeds)) per_seed.push_back(final_mean(t, 1000));
    const double m = std::accumulate(per_seed.begin(), per_seed.end(), 0.0) / double(per_seed.size());
    means.push_back(m);
    detail += (detail.empty() ? "" : ", ") + std::string(mode_name(mode)) + " " + fmt(m);
  }
  const bool ok = means[0] >= means[1] && std::abs(means[0] - 10.0) <= 0.5;
  return {ok, "final-1000 mean reward: " + detail};
}

Outcome decay_statistics() {
  const auto& a = four_room_artifacts();
  const auto& tree = a.trees[0];
  const Layout& layout = a.target;
  const EnvState s0 = reset(layout, 5);
  const StateFeatures state = featurize(s0, layout, AgentRole::Medic);
  const auto valid = valid_actions(layout, s0, AgentRole::Medic);

  const std::size_t opportunities = 5000;
  bool ok = true;
  std::string detail;
  for (double gamma : {0.9, 0.99}) {
    for (std::size_t j : {0u, 10u, 100u}) {
      AdvisingConfig ac;
      ac.budget = 0;
      ac.decay = gamma;
      auto session = AdvisingSession::start(ac);
      session.iteration = j;
      PartialTree partial = PartialTree::of(tree);
      store_path(partial, extract_path(tree, state));
      Rng rng(derive_seed(808, j, static_cast<std::uint64_t>(gamma * 100)));
      std::size_t reused = 0;
      for (std::size_t i = 0; i < opportunities; ++i) {
        const auto d = eaa_step(session, partial, a.teacher[0], tree, StepContext{state, valid, i, valid[0]}, rng);
        reused += d.source == DecisionSource::Reused;
      }
      const double rate = double(reused) / double(opportunities);
      const double expect = std::pow(gamma, double(j));
      ok = ok && std::abs(rate - expect) <= 0.05;
      detail += (detail.empty() ? "" : ", ") + std::string("g=") + fmt(gamma, 2) + " j=" + std::to_string(j) + " " +
                fmt(rate) + " vs " + fmt(expect);
    }
  }
  return {ok, detail + " (" + std::to_string(opportunities) + " opportunities each)"};
}

// Full pipeline into CSV text: teacher, distillation, every compare mode.
std::vector<std::pair<std::string, std::string>> pipeline_outputs() {
  auto cfg = four_room_config();
  cfg.seeds = {1, 2};
  cfg.trials = 2;
  cfg.episodes = 500;
  const auto a = prepare_artifacts(cfg);
  std::vector<std::pair<std::string, std::string>> out;
  std::ostringstream teacher;
  write_qtables(teacher, a.teacher);
  out.emplace_back("teacher.qt", teacher.str());
  std::ostringstream trees;
  write_trees(trees, a.trees);
  out.emplace_back("teacher.tree", trees.str());
  for (auto mode : cfg.compare_modes) {
    const auto trials = run_trials(cfg, a, mode, cfg.seeds);
    for (std::size_t k = 0; k < trials.size(); ++k) {
      std::ostringstream t;
      write_trial_csv(t, trials[k]);
      out.emplace_back(std::string(mode_name(mode)) + "/trial_" + std::to_string(cfg.seeds[k]) + ".csv", t.str());
    }
    std::ostringstream c;
    write_curve_csv(c, aggregate(trials), cfg.smoothing_window);
    out.emplace_back("curve_" + std::string(mode_name(mode)) + ".csv", c.str());
  }
  return out;
}

Outcome determinism() {
  std::cout << "  overrides: experiment.seeds=1,2 experiment.episodes=500\n";
  const auto first = pipeline_outputs();
  const auto second = pipeline_outputs();
  std::size_t same = 0;
  for (std::size_t i = 0; i < first.size() && i < second.size(); ++i) {
    same += first[i] == second[i];
  }
  std::size_t bytes = 0;
  for (const auto& f : first) bytes += f.second.size();
  return {first.size() == second.size() && same == first.size(),
          std::to_string(same) + "/" + std::to_string(first.size()) + " outputs byte-identical (" +
              std::to_string(bytes) + " bytes)"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"teacher optimality", teacher_optimality},
      {"distillation fidelity", distillation_fidelity},
      {"reconstruction oracle", reconstruction_oracle},
      {"merge algebra", merge_algebra},
      {"sample-efficiency ordering", sample_efficiency},
      {"budget-exhaustion delay", exhaustion_delay},
      {"transfer rejection benefit", transfer_rejection},
      {"decay statistics", decay_statistics},
      {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "criterion " << i + 1 << " (" << criteria[i].first << "): " << (o.pass ? "PASS" : "FAIL") << ": "
              << o.detail << " [" << fmt(secs, 1) << "s]" << std::endl;
    failures += !o.pass;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
