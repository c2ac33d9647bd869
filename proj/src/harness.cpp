#include "eaa/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <ostream>
#include <sstream>
#include <thread>

#include "eaa/random.hpp"
#include "eaa/text.hpp"

namespace eaa {

namespace {

// Seed streams within one trial. Environment resets share a stream across
// modes so that matched seeds see matched victim placements.
constexpr std::uint64_t kResetStream = 100;
constexpr std::uint64_t kExploreStream = 200;
constexpr std::uint64_t kReuseStream = 300;
constexpr std::uint64_t kEvalStream = 400;
constexpr std::uint64_t kPretrainStream = 500;

AdvisingMode advising_mode(StudentMode mode) {
  switch (mode) {
    case StudentMode::AA: return AdvisingMode::AA;
    case StudentMode::EAA: return AdvisingMode::EAA;
    case StudentMode::EAAAlwaysAccept: return AdvisingMode::EAAAlwaysAccept;
    default: return AdvisingMode::None;
  }
}

bool uses_advising(StudentMode mode) {
  return mode == StudentMode::AA || mode == StudentMode::EAA || mode == StudentMode::EAAAlwaysAccept;
}

bool uses_trees(StudentMode mode) {
  return mode == StudentMode::EAA || mode == StudentMode::EAAAlwaysAccept || mode == StudentMode::EAAExplore ||
         mode == StudentMode::EAANoReflect;
}

enum class Phase { Advised, Reflect };

// Per-agent learning state of one trial in one environment.
struct AgentState {
  QTable table;
  AdvisingSession session;
  std::optional<PartialTree> partial;
  Rng explore;
  Rng reuse;
  std::size_t t = 0;
};

struct EpisodeStats {
  double reward = 0.0;
  std::size_t length = 0;
};

class TrialRunner {
 public:
  TrialRunner(const Layout& env, const LearnerConfig& learner, const Artifacts& artifacts, StudentMode mode,
              Phase phase, std::vector<AgentState>& agents, std::ostream* trace)
      : env_(env),
        learner_(learner),
        artifacts_(artifacts),
        mode_(mode),
        phase_(phase),
        agents_(agents),
        roles_(env.agents()),
        trace_(trace) {}

  EpisodeStats run_episode(std::size_t episode, std::uint64_t reset_seed) {
    const double epsilon = learner_.epsilon_at(episode);
    for (auto& a : agents_) a.session.iteration = episode;

    const std::size_t n = roles_.size();
    EnvState s = reset(env_, reset_seed);
    std::vector<std::vector<Transition>> trajectory(n);
    std::vector<StateFeatures> features(n);
    std::vector<std::vector<ActionId>> valid(n);
    for (std::size_t i = 0; i < n; ++i) {
      features[i] = featurize(s, env_, roles_[i]);
      valid[i] = valid_actions(env_, s, roles_[i]);
    }

    EpisodeStats stats;
    std::vector<ActionId> joint(n);
    while (!is_terminal(env_, s)) {
      for (std::size_t i = 0; i < n; ++i) {
        auto& agent = agents_[i];
        const ActionId proposal = act_epsilon_greedy(agent.table, features[i], valid[i], epsilon, agent.explore);
        const StepDecision d = decide(i, StepContext{features[i], valid[i], agent.t, proposal});
        joint[i] = d.action;
        ++agent.t;
        if (trace_) {
          *trace_ << episode << ',' << stats.length << ',' << role_name(roles_[i]) << ',' << source_name(d.source)
                  << ',' << d.action << ',' << agent.session.remaining << ',' << (d.rejected_advice ? 1 : 0) << '\n';
        }
      }
      const auto out = step(env_, s, joint);
      stats.reward += out.reward;
      ++stats.length;
      for (std::size_t i = 0; i < n; ++i) {
        auto next = featurize(out.state, env_, roles_[i]);
        auto next_valid = out.done ? std::vector<ActionId>{} : valid_actions(env_, out.state, roles_[i]);
        trajectory[i].push_back({std::move(features[i]), joint[i], out.reward, next, next_valid, 0, out.done});
        features[i] = std::move(next);
        valid[i] = std::move(next_valid);
      }
      s = out.state;
    }

    for (std::size_t i = 0; i < n; ++i) {
      auto& traj = trajectory[i];
      for (std::size_t k = 0; k + 1 < traj.size(); ++k) traj[k].next_action = traj[k + 1].action;
      learn_episode(agents_[i].table, traj, learner_);
    }
    return stats;
  }

 private:
  StepDecision decide(std::size_t i, const StepContext& ctx) {
    auto& agent = agents_[i];
    if (phase_ == Phase::Reflect) return reflect_explore(agent.session, *agent.partial, ctx, agent.reuse);
    switch (mode_) {
      case StudentMode::AA:
        return aa_step(agent.session, artifacts_.teacher[i], ctx);
      case StudentMode::EAA:
      case StudentMode::EAAAlwaysAccept:
      case StudentMode::EAAExplore:
      case StudentMode::EAANoReflect:
        return eaa_step(agent.session, *agent.partial, artifacts_.teacher[i], artifacts_.trees[i], ctx, agent.reuse);
      default:
        return {DecisionSource::Own, ctx.student_action, std::nullopt, false};
    }
  }

  const Layout& env_;
  const LearnerConfig& learner_;
  const Artifacts& artifacts_;
  StudentMode mode_;
  Phase phase_;
  std::vector<AgentState>& agents_;
  std::vector<AgentRole> roles_;
  std::ostream* trace_;
};

QTable::RowInitializer projected_rows(const QTable& from, const std::optional<TransferFeatures>& transfer) {
  return [&from, &transfer](const QTable::Key& key) { return from.row(transfer ? transfer->project(key) : key); };
}

std::vector<AgentState> fresh_agents(const Layout& env, const AdvisingConfig& advising,
                                     const std::optional<TransferFeatures>& transfer, const Artifacts& artifacts,
                                     bool with_partial, std::uint64_t seed) {
  std::vector<AgentState> out;
  for (std::size_t i = 0; i < env.num_agents(); ++i) {
    AgentState a{QTable(action_count(env)), AdvisingSession::start(advising, transfer), std::nullopt,
                 Rng(derive_seed(seed, kExploreStream + i)), Rng(derive_seed(seed, kReuseStream + i)), 0};
    if (with_partial) a.partial = PartialTree::of(artifacts.trees.at(i));
    out.push_back(std::move(a));
  }
  return out;
}

void check_trial_inputs(const Artifacts& artifacts, StudentMode mode) {
  const auto n = artifacts.target.num_agents();
  if (artifacts.teacher.size() != n) throw ConfigError("teacher artifacts missing for this environment");
  if (uses_trees(mode) && artifacts.trees.size() != n) {
    throw ConfigError("distilled trees required for mode " + std::string(mode_name(mode)));
  }
  if (artifacts.source.num_agents() != n || action_count(artifacts.source) != action_count(artifacts.target)) {
    throw ConfigError("source and target layouts must share rooms and agents");
  }
}

}  // namespace

Layout load_env(const std::filesystem::path& path, EnvVariant variant) {
  Layout layout = load_layout_file(path);
  if (variant == EnvVariant::SingleAgent) {
    return layout.multi_agent() ? single_agent_variant(std::move(layout)) : layout;
  }
  if (!layout.multi_agent()) throw ConfigError("layout '" + path.string() + "' has no engineer start room");
  return layout;
}

Artifacts prepare_artifacts(const ExperimentConfig& config, bool with_trees) {
  Artifacts a;
  a.target = load_env(config.layout, config.variant);
  a.source = config.source_layout ? load_env(*config.source_layout, config.variant) : a.target;
  if (a.source.num_agents() != a.target.num_agents() || action_count(a.source) != action_count(a.target)) {
    throw ConfigError("source and target layouts must share rooms and agents");
  }
  auto source_names = feature_schema(a.source).names;
  auto target_names = feature_schema(a.target).names;
  if (source_names != target_names) a.transfer.emplace(source_names, target_names);

  const std::uint64_t eval_seed = derive_seed(config.teacher_seed, 3);
  if (config.teacher_dir) {
    const auto qt = *config.teacher_dir / "teacher.qt";
    std::ifstream in(qt);
    if (!in) throw ConfigError("missing teacher artifact '" + qt.string() + "'");
    a.teacher = read_qtables(in);
    if (a.teacher.size() != a.source.num_agents()) throw ConfigError("teacher table count does not match layout");
    a.teacher_reward =
        evaluate_policy(a.source, greedy_policy(a.teacher), config.teacher_eval_episodes, eval_seed).mean_reward;
    const auto tree_path = *config.teacher_dir / "teacher.tree";
    if (std::ifstream tin(tree_path); tin) {
      a.trees = read_trees(tin);
      if (a.trees.size() != a.source.num_agents()) throw ConfigError("tree count does not match layout");
      for (const auto& t : a.trees) {
        if (t.feature_names() != source_names) throw ConfigError("tree features do not match the source layout");
      }
    }
  } else {
    auto model = train_teacher(a.source, config.teacher_learner, config.teacher_seed, config.teacher_eval_episodes,
                               config.teacher_min_fraction);
    a.teacher = std::move(model.tables);
    a.teacher_reward = model.eval_reward;
  }
  if (with_trees && a.trees.empty()) {
    a.distill = viper(a.source, a.teacher, config.distill);
    a.trees = a.distill->trees();
  }
  return a;
}

std::vector<EpisodeRecord> run_trial(const ExperimentConfig& config, const Artifacts& artifacts, StudentMode mode,
                                     std::uint64_t seed, std::ostream* trace) {
  config.validate();
  check_trial_inputs(artifacts, mode);
  const Layout& env = artifacts.target;

  LearnerConfig learner = config.student_learner;
  learner.episodes = config.episodes;
  AdvisingConfig advising = config.advising;
  advising.mode = advising_mode(mode);

  if (trace) *trace << "episode,step,agent,source,action,budget_remaining,rejected\n";

  std::vector<AgentState> agents;
  std::vector<AgentState> pretrained;  // referenced by the target tables' row initializers
  Phase phase = Phase::Advised;

  if (mode == StudentMode::EAAExplore || mode == StudentMode::EAANoReflect) {
    // Teacher-guided pretraining where the teacher was trained.
    LearnerConfig pre_learner = config.student_learner;
    pre_learner.episodes = config.pretrain_episodes;
    AdvisingConfig pre = config.advising;
    pre.mode = AdvisingMode::EAA;
    const std::uint64_t pre_seed = derive_seed(seed, kPretrainStream);
    pretrained = fresh_agents(artifacts.source, pre, std::nullopt, artifacts, true, pre_seed);
    TrialRunner runner(artifacts.source, pre_learner, artifacts, StudentMode::EAA, Phase::Advised, pretrained,
                       nullptr);
    for (std::size_t e = 0; e < config.pretrain_episodes; ++e) {
      runner.run_episode(e, derive_seed(pre_seed, kResetStream, e));
    }

    AdvisingConfig reflect = config.advising;
    reflect.mode = mode == StudentMode::EAAExplore ? AdvisingMode::EAA : AdvisingMode::EAAAlwaysAccept;
    reflect.budget = 0;
    agents = fresh_agents(env, reflect, artifacts.transfer, artifacts, false, seed);
    for (std::size_t i = 0; i < agents.size(); ++i) {
      agents[i].partial = std::move(pretrained[i].partial);
      agents[i].table.set_row_initializer(projected_rows(pretrained[i].table, artifacts.transfer));
    }
    phase = Phase::Reflect;
  } else {
    agents = fresh_agents(env, advising, artifacts.transfer, artifacts, uses_trees(mode), seed);
    if (mode == StudentMode::WarmStart) {
      for (std::size_t i = 0; i < agents.size(); ++i) {
        agents[i].table.set_row_initializer(projected_rows(artifacts.teacher[i], artifacts.transfer));
      }
    }
  }

  TrialRunner runner(env, learner, artifacts, mode, phase, agents, trace);
  std::vector<EpisodeRecord> records;
  records.reserve(config.episodes);
  double eval_reward = 0.0;
  const std::uint64_t eval_seed = derive_seed(seed, kEvalStream);
  for (std::size_t e = 0; e < config.episodes; ++e) {
    const auto stats = runner.run_episode(e, derive_seed(seed, kResetStream, e));
    if (e % config.eval_cadence == 0 || e + 1 == config.episodes) {
      std::vector<QTable> tables;
      for (const auto& a : agents) tables.push_back(a.table);
      eval_reward = evaluate_policy(env, greedy_policy(tables), config.eval_episodes, eval_seed).mean_reward;
    }
    EpisodeRecord r;
    r.seed = seed;
    r.episode = e;
    r.reward = stats.reward;
    r.length = stats.length;
    bool all_spent = uses_advising(mode);
    for (const auto& a : agents) {
      r.advice_issued += a.session.advice_issued;
      r.advice_reused += a.session.advice_reused;
      r.advice_rejected += a.session.advice_rejected;
      all_spent = all_spent && a.session.exhausted();
    }
    r.budget_exhausted = all_spent;
    r.eval_reward = eval_reward;
    records.push_back(r);
  }
  return records;
}

std::vector<std::vector<EpisodeRecord>> run_trials(const ExperimentConfig& config, const Artifacts& artifacts,
                                                   StudentMode mode, const std::vector<std::uint64_t>& seeds) {
  std::vector<std::vector<EpisodeRecord>> out(seeds.size());
  const std::size_t workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  for (std::size_t start = 0; start < seeds.size(); start += workers) {
    std::vector<std::future<std::vector<EpisodeRecord>>> batch;
    const std::size_t end = std::min(seeds.size(), start + workers);
    for (std::size_t k = start; k < end; ++k) {
      batch.push_back(std::async(std::launch::async, [&, k] { return run_trial(config, artifacts, mode, seeds[k]); }));
    }
    for (std::size_t k = start; k < end; ++k) out[k] = batch[k - start].get();
  }
  return out;
}

std::optional<std::size_t> exhaustion_episode(const std::vector<EpisodeRecord>& records) {
  for (const auto& r : records) {
    if (r.budget_exhausted) return r.episode;
  }
  return std::nullopt;
}

std::optional<std::size_t> episodes_to_reach(const std::vector<EpisodeRecord>& records, double threshold) {
  for (const auto& r : records) {
    if (r.eval_reward >= threshold) return r.episode;
  }
  return std::nullopt;
}

CurveTable aggregate(const std::vector<std::vector<EpisodeRecord>>& trials, RewardColumn column) {
  CurveTable table;
  if (trials.empty()) return table;
  const std::size_t len = trials.front().size();
  for (const auto& t : trials) {
    if (t.size() != len) throw std::invalid_argument("aggregate: trials have different episode counts");
  }

  std::optional<std::size_t> lo;
  std::optional<std::size_t> hi;
  for (const auto& t : trials) {
    const auto ex = exhaustion_episode(t);
    table.exhaustion.push_back(ex);
    if (ex) {
      lo = lo ? std::min(*lo, *ex) : *ex;
      hi = hi ? std::max(*hi, *ex) : *ex;
    }
  }

  const double k = static_cast<double>(trials.size());
  for (std::size_t e = 0; e < len; ++e) {
    CurveRow row;
    row.episode = trials.front()[e].episode;
    double sum = 0.0;
    for (const auto& t : trials) {
      sum += column == RewardColumn::Training ? t[e].reward : t[e].eval_reward;
      row.mean_advice_issued += static_cast<double>(t[e].advice_issued);
      row.mean_advice_reused += static_cast<double>(t[e].advice_reused);
    }
    row.mean_reward = sum / k;
    double sq = 0.0;
    for (const auto& t : trials) {
      const double d = (column == RewardColumn::Training ? t[e].reward : t[e].eval_reward) - row.mean_reward;
      sq += d * d;
    }
    row.std_reward = std::sqrt(sq / k);
    row.mean_advice_issued /= k;
    row.mean_advice_reused /= k;
    row.exhaustion_min = lo;
    row.exhaustion_max = hi;
    table.rows.push_back(row);
  }
  return table;
}

void write_curve_csv(std::ostream& out, const CurveTable& table, std::size_t window) {
  if (window == 0) throw std::invalid_argument("smoothing window must be >= 1");
  out << kCurveHeader << '\n';
  const auto& rows = table.rows;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double mean = rows[i].mean_reward;
    double sd = rows[i].std_reward;
    if (window > 1) {
      const std::size_t first = i + 1 >= window ? i + 1 - window : 0;
      mean = 0.0;
      sd = 0.0;
      for (std::size_t j = first; j <= i; ++j) {
        mean += rows[j].mean_reward;
        sd += rows[j].std_reward;
      }
      const double w = static_cast<double>(i - first + 1);
      mean /= w;
      sd /= w;
    }
    const auto opt = [](const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : std::string(); };
    out << rows[i].episode << ',' << text::format_double(mean) << ',' << text::format_double(sd) << ','
        << text::format_double(rows[i].mean_advice_issued) << ',' << text::format_double(rows[i].mean_advice_reused)
        << ',' << opt(rows[i].exhaustion_min) << ',' << opt(rows[i].exhaustion_max) << '\n';
  }
}

void export_csv(const CurveTable& table, const std::filesystem::path& path, std::size_t window) {
  std::ostringstream buf;
  write_curve_csv(buf, table, window);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << buf.str();
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

CurveTable read_curve_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCurveHeader) throw std::invalid_argument("curve csv: bad header");
  CurveTable table;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = text::split(line, ',');
    if (f.size() != 7) throw std::invalid_argument("curve csv line " + std::to_string(line_no) + ": 7 fields expected");
    CurveRow r;
    r.episode = text::parse_uint<std::size_t>(f[0]);
    r.mean_reward = text::parse_double(f[1]);
    r.std_reward = text::parse_double(f[2]);
    r.mean_advice_issued = text::parse_double(f[3]);
    r.mean_advice_reused = text::parse_double(f[4]);
    if (!f[5].empty()) r.exhaustion_min = text::parse_uint<std::size_t>(f[5]);
    if (!f[6].empty()) r.exhaustion_max = text::parse_uint<std::size_t>(f[6]);
    table.rows.push_back(r);
  }
  return table;
}

void write_trial_csv(std::ostream& out, const std::vector<EpisodeRecord>& records) {
  out << "episode,reward,length,advice_issued,advice_reused,advice_rejected,budget_exhausted,eval_reward\n";
  for (const auto& r : records) {
    out << r.episode << ',' << text::format_double(r.reward) << ',' << r.length << ',' << r.advice_issued << ','
        << r.advice_reused << ',' << r.advice_rejected << ',' << (r.budget_exhausted ? 1 : 0) << ','
        << text::format_double(r.eval_reward) << '\n';
  }
}

std::vector<EpisodeRecord> read_trial_csv(std::istream& in, std::uint64_t seed) {
  std::string line;
  if (!std::getline(in, line) ||
      line != "episode,reward,length,advice_issued,advice_reused,advice_rejected,budget_exhausted,eval_reward") {
    throw std::invalid_argument("trial csv: bad header");
  }
  std::vector<EpisodeRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = text::split(line, ',');
    if (f.size() != 8) throw std::invalid_argument("trial csv line " + std::to_string(line_no) + ": 8 fields expected");
    EpisodeRecord r;
    r.seed = seed;
    r.episode = text::parse_uint<std::size_t>(f[0]);
    r.reward = text::parse_double(f[1]);
    r.length = text::parse_uint<std::size_t>(f[2]);
    r.advice_issued = text::parse_uint<std::size_t>(f[3]);
    r.advice_reused = text::parse_uint<std::size_t>(f[4]);
    r.advice_rejected = text::parse_uint<std::size_t>(f[5]);
    r.budget_exhausted = text::parse_uint<int>(f[6]) != 0;
    r.eval_reward = text::parse_double(f[7]);
    out.push_back(r);
  }
  return out;
}

}  // namespace eaa
