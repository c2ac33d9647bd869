#pragma once

// Explainable action advising. Each step the student either
//   1. reuses an action from its reconstructed sub-tree (probability decay^j),
//   2. receives teacher advice plus the decision path that explains it, or
//   3. acts on its own policy.
// Plain action advising (AA) is case 2/3 without memory.
//
// Reuse probability is decay^j, so reliance on stored advice shrinks as the
// iteration counter j grows.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "eaa/dtree.hpp"
#include "eaa/gridworld.hpp"
#include "eaa/random.hpp"
#include "eaa/tabular_rl.hpp"

namespace eaa {

enum class AdvisingMode { EAA, AA, EAAAlwaysAccept, None };

struct EarlyAdvising {
  bool operator==(const EarlyAdvising&) const = default;
};
struct AlternativeAdvising {
  std::size_t period = 4;
  bool operator==(const AlternativeAdvising&) const = default;
};
struct ImportanceAdvising {
  double threshold = 1.0;
  bool operator==(const ImportanceAdvising&) const = default;
};
struct MistakeCorrecting {
  double threshold = 1.0;
  bool operator==(const MistakeCorrecting&) const = default;
};
using Heuristic = std::variant<EarlyAdvising, AlternativeAdvising, ImportanceAdvising, MistakeCorrecting>;

std::string heuristic_name(const Heuristic& h);

/// Source and target feature sets of a transfer setting, keyed by name.
/// The teacher, its tree and the student's partial tree all live in source
/// feature space; `project` maps a target state into it.
class TransferFeatures {
 public:
  TransferFeatures(std::vector<std::string> source, std::vector<std::string> target);

  const std::vector<std::string>& source() const { return source_; }
  const std::vector<std::string>& target() const { return target_; }
  /// Indices (into source) of features absent from the target.
  const std::vector<std::size_t>& source_only() const { return source_only_; }
  /// Indices (into target) of features absent from the source.
  const std::vector<std::size_t>& target_only() const { return target_only_; }
  bool identical() const { return source_only_.empty() && target_only_.empty(); }

  /// Target vector -> source vector; source-only features read as 0.
  StateFeatures project(std::span<const double> target_state) const;

 private:
  std::vector<std::string> source_;
  std::vector<std::string> target_;
  std::vector<std::size_t> source_only_;
  std::vector<std::size_t> target_only_;
  std::vector<std::optional<std::size_t>> source_from_target_;
};

struct AdvisingConfig {
  AdvisingMode mode = AdvisingMode::EAA;
  Heuristic heuristic = EarlyAdvising{};
  std::size_t budget = 1000;
  double decay = 0.999;
  double storage_threshold = 0.8;

  bool operator==(const AdvisingConfig&) const = default;
};

struct AdvisingSession {
  AdvisingMode mode = AdvisingMode::EAA;
  Heuristic heuristic = EarlyAdvising{};
  std::size_t budget = 0;
  std::size_t remaining = 0;
  double decay = 0.999;
  std::size_t iteration = 0;  // j: policy-update cycles completed
  double storage_threshold = 0.8;
  std::size_t advice_issued = 0;
  std::size_t advice_reused = 0;
  std::size_t advice_rejected = 0;
  std::optional<TransferFeatures> transfer;

  static AdvisingSession start(const AdvisingConfig& config, std::optional<TransferFeatures> transfer = {});

  double reuse_probability() const;
  bool exhausted() const { return remaining == 0; }
  /// State as the teacher and partial tree see it.
  StateFeatures source_view(const StateFeatures& s) const { return transfer ? transfer->project(s) : s; }
};

enum class DecisionSource { Reused, Advised, Own, Explored };

std::string_view source_name(DecisionSource source);

struct StepDecision {
  DecisionSource source = DecisionSource::Own;
  ActionId action = 0;
  std::optional<DecisionPath> explanation;  // set iff advised and stored
  bool rejected_advice = false;
};

/// What the student sees and would do at this step.
struct StepContext {
  const StateFeatures& state;        // target (student) feature space
  std::span<const ActionId> valid;   // non-empty
  std::size_t t = 0;                 // training step counter of this agent
  ActionId student_action = 0;       // the student's own epsilon-greedy choice
};

bool heuristic_fires(const Heuristic& heuristic, std::size_t t, ActionId student_action, ActionId teacher_action,
                     double importance_value);

/// Store the explanation only if the distilled tree agrees with the teacher
/// and is confident: prediction.action == teacher_action and probability > threshold.
bool should_store(ActionId teacher_action, const Prediction& distilled, double storage_threshold);

/// True if the path tests a source-only feature, or a target-only feature is
/// active (non-zero) in the target state `s`.
bool transfer_reject(const DecisionPath& path, std::span<const double> s, const TransferFeatures& features);

StepDecision eaa_step(AdvisingSession& session, PartialTree& partial, const QTable& teacher,
                      const DecisionTreePolicy& distilled, const StepContext& ctx, Rng& rng);

StepDecision aa_step(AdvisingSession& session, const QTable& teacher, const StepContext& ctx);

/// Teacher-less continuation with a partial tree built elsewhere. When the
/// stored path that would be reused is rejected under the session's transfer
/// features, a uniformly random valid action is taken instead. Sessions in
/// always-accept mode never reject.
StepDecision reflect_explore(AdvisingSession& session, const PartialTree& partial, const StepContext& ctx, Rng& rng);

}  // namespace eaa
