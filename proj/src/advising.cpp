#include "eaa/advising.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace eaa {

std::string heuristic_name(const Heuristic& h) {
  struct Visitor {
    std::string operator()(const EarlyAdvising&) const { return "early"; }
    std::string operator()(const AlternativeAdvising&) const { return "alternative"; }
    std::string operator()(const ImportanceAdvising&) const { return "importance"; }
    std::string operator()(const MistakeCorrecting&) const { return "mistake_correcting"; }
  };
  return std::visit(Visitor{}, h);
}

TransferFeatures::TransferFeatures(std::vector<std::string> source, std::vector<std::string> target)
    : source_(std::move(source)), target_(std::move(target)) {
  for (std::size_t i = 0; i < source_.size(); ++i) {
    const auto it = std::find(target_.begin(), target_.end(), source_[i]);
    if (it == target_.end()) {
      source_only_.push_back(i);
      source_from_target_.emplace_back(std::nullopt);
    } else {
      source_from_target_.emplace_back(static_cast<std::size_t>(it - target_.begin()));
    }
  }
  for (std::size_t i = 0; i < target_.size(); ++i) {
    if (std::find(source_.begin(), source_.end(), target_[i]) == source_.end()) target_only_.push_back(i);
  }
}

StateFeatures TransferFeatures::project(std::span<const double> target_state) const {
  if (target_state.size() != target_.size()) throw std::invalid_argument("project: state width mismatch");
  StateFeatures out(source_.size(), 0.0);
  for (std::size_t i = 0; i < source_.size(); ++i) {
    if (source_from_target_[i]) out[i] = target_state[*source_from_target_[i]];
  }
  return out;
}

AdvisingSession AdvisingSession::start(const AdvisingConfig& config, std::optional<TransferFeatures> transfer) {
  if (!(config.decay > 0.0 && config.decay <= 1.0)) throw std::invalid_argument("decay must be in (0, 1]");
  if (config.storage_threshold < 0.0 || config.storage_threshold > 1.0) {
    throw std::invalid_argument("storage_threshold must be in [0, 1]");
  }
  if (const auto* alt = std::get_if<AlternativeAdvising>(&config.heuristic); alt && alt->period == 0) {
    throw std::invalid_argument("alternative advising period must be >= 1");
  }
  AdvisingSession s;
  s.mode = config.mode;
  s.heuristic = config.heuristic;
  s.budget = config.budget;
  s.remaining = config.budget;
  s.decay = config.decay;
  s.storage_threshold = config.storage_threshold;
  s.transfer = std::move(transfer);
  return s;
}

double AdvisingSession::reuse_probability() const {
  return std::pow(decay, static_cast<double>(iteration));
}

std::string_view source_name(DecisionSource source) {
  switch (source) {
    case DecisionSource::Reused: return "reused";
    case DecisionSource::Advised: return "advised";
    case DecisionSource::Own: return "own";
    case DecisionSource::Explored: return "explored";
  }
  return "?";
}

bool heuristic_fires(const Heuristic& heuristic, std::size_t t, ActionId student_action, ActionId teacher_action,
                     double importance_value) {
  struct Visitor {
    std::size_t t;
    ActionId student;
    ActionId teacher;
    double imp;
    bool operator()(const EarlyAdvising&) const { return true; }
    bool operator()(const AlternativeAdvising& h) const { return t % h.period == 0; }
    bool operator()(const ImportanceAdvising& h) const { return imp > h.threshold; }
    bool operator()(const MistakeCorrecting& h) const { return imp > h.threshold && student != teacher; }
  };
  return std::visit(Visitor{t, student_action, teacher_action, importance_value}, heuristic);
}

bool should_store(ActionId teacher_action, const Prediction& distilled, double storage_threshold) {
  return distilled.action == teacher_action && distilled.probability > storage_threshold;
}

bool transfer_reject(const DecisionPath& path, std::span<const double> s, const TransferFeatures& features) {
  const auto& source_only = features.source_only();
  for (const auto& p : path.predicates) {
    if (std::binary_search(source_only.begin(), source_only.end(), p.feature)) return true;
  }
  for (std::size_t i : features.target_only()) {
    if (i < s.size() && s[i] != 0.0) return true;
  }
  return false;
}

namespace {

struct Advice {
  ActionId teacher_action;
  StateFeatures source_state;
};

// Case 2 gate shared by AA and EAA: budget left and the heuristic fires.
// Consumes one unit of budget when advice is issued.
std::optional<Advice> request_advice(AdvisingSession& session, const QTable& teacher, const StepContext& ctx) {
  if (session.remaining == 0) return std::nullopt;
  auto src = session.source_view(ctx.state);
  const ActionId teacher_action = greedy_action(teacher, src, ctx.valid);
  const double imp = importance(teacher, src, ctx.valid);
  if (!heuristic_fires(session.heuristic, ctx.t, ctx.student_action, teacher_action, imp)) return std::nullopt;
  --session.remaining;
  ++session.advice_issued;
  return Advice{teacher_action, std::move(src)};
}

StepDecision own(const StepContext& ctx) { return {DecisionSource::Own, ctx.student_action, std::nullopt, false}; }

}  // namespace

StepDecision aa_step(AdvisingSession& session, const QTable& teacher, const StepContext& ctx) {
  if (session.mode == AdvisingMode::None) return own(ctx);
  if (auto advice = request_advice(session, teacher, ctx)) {
    return {DecisionSource::Advised, advice->teacher_action, std::nullopt, false};
  }
  return own(ctx);
}

StepDecision eaa_step(AdvisingSession& session, PartialTree& partial, const QTable& teacher,
                      const DecisionTreePolicy& distilled, const StepContext& ctx, Rng& rng) {
  if (session.mode == AdvisingMode::None || session.mode == AdvisingMode::AA) {
    return aa_step(session, teacher, ctx);
  }

  const auto src = session.source_view(ctx.state);
  if (const auto stored = query_partial(partial, src)) {
    if (uniform01(rng) < session.reuse_probability()) {
      ++session.advice_reused;
      return {DecisionSource::Reused, stored->action, std::nullopt, false};
    }
  }

  auto advice = request_advice(session, teacher, ctx);
  if (!advice) return own(ctx);

  auto path = extract_path(distilled, advice->source_state);
  if (session.mode == AdvisingMode::EAA && session.transfer && transfer_reject(path, ctx.state, *session.transfer)) {
    ++session.advice_rejected;
    return {DecisionSource::Own, ctx.student_action, std::nullopt, true};
  }
  if (should_store(advice->teacher_action, {path.leaf_action, path.leaf_probability}, session.storage_threshold)) {
    store_path(partial, path);
    return {DecisionSource::Advised, advice->teacher_action, std::move(path), false};
  }
  return {DecisionSource::Advised, advice->teacher_action, std::nullopt, false};
}

StepDecision reflect_explore(AdvisingSession& session, const PartialTree& partial, const StepContext& ctx, Rng& rng) {
  const auto src = session.source_view(ctx.state);
  if (const auto stored = partial_path(partial, src)) {
    if (uniform01(rng) < session.reuse_probability()) {
      if (session.mode == AdvisingMode::EAA && session.transfer &&
          transfer_reject(*stored, ctx.state, *session.transfer)) {
        ++session.advice_rejected;
        return {DecisionSource::Explored, ctx.valid[uniform_index(rng, ctx.valid.size())], std::nullopt, true};
      }
      ++session.advice_reused;
      return {DecisionSource::Reused, stored->leaf_action, std::nullopt, false};
    }
  }
  return own(ctx);
}

}  // namespace eaa
