#pragma once

// Experiment runner: configuration, teacher/tree preparation, seeded trials
// of (environment x student learner x advising mode), aggregation into
// learning curves and CSV export.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "eaa/advising.hpp"
#include "eaa/distill.hpp"
#include "eaa/dtree.hpp"
#include "eaa/gridworld.hpp"
#include "eaa/tabular_rl.hpp"

namespace eaa {

enum class EnvVariant { SingleAgent, MultiAgent };

/// Student training regimes.
///   none               plain learner
///   aa, eaa            advising without / with explanations
///   eaa_always_accept  eaa without transfer rejection
///   warm_start         student Q-table initialised from the teacher's table
///   eaa_explore        pretrain with eaa in the source layout, then continue
///                      in the target without a teacher, exploring instead of
///                      reusing rejected paths
///   eaa_no_reflect     as eaa_explore but reusing every stored path
enum class StudentMode { None, AA, EAA, EAAAlwaysAccept, WarmStart, EAAExplore, EAANoReflect };

std::string_view mode_name(StudentMode mode);
std::optional<StudentMode> parse_mode(std::string_view name);

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::filesystem::path layout;  // the student's environment
  EnvVariant variant = EnvVariant::MultiAgent;
  std::optional<std::filesystem::path> source_layout;  // transfer: the teacher's environment

  // Teacher: trained from scratch, or loaded from a run directory holding
  // teacher.qt (and teacher.tree, if present).
  std::optional<std::filesystem::path> teacher_dir;
  LearnerConfig teacher_learner;
  std::uint64_t teacher_seed = 7;
  std::size_t teacher_eval_episodes = 100;
  double teacher_min_fraction = 0.95;  // of the optimum; lower it for layouts tabular learners cannot solve

  DistillConfig distill;

  LearnerConfig student_learner;  // episodes is taken from `episodes`
  StudentMode mode = StudentMode::EAA;
  AdvisingConfig advising;
  std::size_t pretrain_episodes = 2000;  // eaa_explore / eaa_no_reflect

  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::size_t trials = 5;
  std::size_t episodes = 4000;
  std::size_t eval_cadence = 10;
  std::size_t eval_episodes = 20;
  std::size_t smoothing_window = 50;
  std::filesystem::path output_dir = "runs/default";
  std::vector<StudentMode> compare_modes{StudentMode::EAA, StudentMode::AA, StudentMode::None};
  bool trace = false;

  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

/// `key = value` lines grouped under [section] headers; '#' comments.
/// Relative paths resolve against `base_dir`.
ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
/// Fully resolved config in the same format; parse_config(render_config(c)) == c.
std::string render_config(const ExperimentConfig& config);

struct Artifacts {
  Layout source;  // where the teacher was trained
  Layout target;  // where the student learns
  std::vector<QTable> teacher;
  double teacher_reward = 0.0;
  std::vector<DecisionTreePolicy> trees;
  std::optional<DistillResult> distill;
  std::optional<TransferFeatures> transfer;  // set when source and target features differ
};

Layout load_env(const std::filesystem::path& path, EnvVariant variant);

/// Trains (or loads) the teacher and distils its trees when `with_trees`.
Artifacts prepare_artifacts(const ExperimentConfig& config, bool with_trees = true);

struct EpisodeRecord {
  std::uint64_t seed = 0;
  std::size_t episode = 0;
  double reward = 0.0;
  std::size_t length = 0;
  std::size_t advice_issued = 0;  // cumulative, summed over agents
  std::size_t advice_reused = 0;
  std::size_t advice_rejected = 0;
  bool budget_exhausted = false;  // every agent's budget spent
  double eval_reward = 0.0;       // latest greedy evaluation, advice off

  bool operator==(const EpisodeRecord&) const = default;
};

/// Runs one seeded trial. `trace`, when given, receives per-step decisions as CSV.
std::vector<EpisodeRecord> run_trial(const ExperimentConfig& config, const Artifacts& artifacts, StudentMode mode,
                                     std::uint64_t seed, std::ostream* trace = nullptr);

/// One trial per seed, run in parallel; results in seed order.
std::vector<std::vector<EpisodeRecord>> run_trials(const ExperimentConfig& config, const Artifacts& artifacts,
                                                   StudentMode mode, const std::vector<std::uint64_t>& seeds);

std::optional<std::size_t> exhaustion_episode(const std::vector<EpisodeRecord>& records);
/// First episode whose greedy evaluation reward reaches `threshold`.
std::optional<std::size_t> episodes_to_reach(const std::vector<EpisodeRecord>& records, double threshold);

struct CurveRow {
  std::size_t episode = 0;
  double mean_reward = 0.0;
  double std_reward = 0.0;
  double mean_advice_issued = 0.0;
  double mean_advice_reused = 0.0;
  std::optional<std::size_t> exhaustion_min;  // over trials that exhausted
  std::optional<std::size_t> exhaustion_max;

  bool operator==(const CurveRow&) const = default;
};

struct CurveTable {
  std::vector<CurveRow> rows;
  std::vector<std::optional<std::size_t>> exhaustion;  // per trial
};

enum class RewardColumn { Training, Evaluation };

/// Pointwise mean and population standard deviation across trials.
/// Throws std::invalid_argument on ragged trial lengths.
CurveTable aggregate(const std::vector<std::vector<EpisodeRecord>>& trials,
                     RewardColumn column = RewardColumn::Training);

inline constexpr std::string_view kCurveHeader =
    "episode,mean_reward,std_reward,mean_advice_issued,mean_advice_reused,exhaustion_episode_min,"
    "exhaustion_episode_max";

/// Reward columns are smoothed by a trailing mean of `window` rows (1 = raw).
void export_csv(const CurveTable& table, const std::filesystem::path& path, std::size_t window = 1);
void write_curve_csv(std::ostream& out, const CurveTable& table, std::size_t window = 1);
CurveTable read_curve_csv(std::istream& in);

void write_trial_csv(std::ostream& out, const std::vector<EpisodeRecord>& records);
std::vector<EpisodeRecord> read_trial_csv(std::istream& in, std::uint64_t seed);

}  // namespace eaa
