#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "eaa/harness.hpp"
#include "eaa/text.hpp"

namespace eaa {

namespace {

constexpr std::pair<StudentMode, std::string_view> kModeNames[] = {
    {StudentMode::None, "none"},
    {StudentMode::AA, "aa"},
    {StudentMode::EAA, "eaa"},
    {StudentMode::EAAAlwaysAccept, "eaa_always_accept"},
    {StudentMode::WarmStart, "warm_start"},
    {StudentMode::EAAExplore, "eaa_explore"},
    {StudentMode::EAANoReflect, "eaa_no_reflect"},
};

bool parse_bool(std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("expected true/false, got '" + std::string(v) + "'");
}

Algorithm parse_algorithm(std::string_view v) {
  if (v == "q_learning") return Algorithm::QLearning;
  if (v == "sarsa") return Algorithm::Sarsa;
  throw std::invalid_argument("unknown algorithm '" + std::string(v) + "' (q_learning|sarsa)");
}

std::string_view algorithm_name(Algorithm a) { return a == Algorithm::QLearning ? "q_learning" : "sarsa"; }

StudentMode parse_mode_or_throw(std::string_view v) {
  if (auto m = parse_mode(v)) return *m;
  throw std::invalid_argument("unknown mode '" + std::string(v) + "'");
}

std::vector<std::string_view> list_items(std::string_view v) {
  std::string normalized(v);
  std::replace(normalized.begin(), normalized.end(), ',', ' ');
  std::vector<std::string_view> out;
  // Views into `v`: recompute offsets since `normalized` is temporary.
  for (auto item : text::split_ws(normalized)) {
    out.push_back(v.substr(static_cast<std::size_t>(item.data() - normalized.data()), item.size()));
  }
  return out;
}

std::filesystem::path resolve(std::string_view v, const std::filesystem::path& base) {
  std::filesystem::path p{std::string(v)};
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

using Setter = std::function<void(ExperimentConfig&, std::string_view)>;

void add_learner_keys(std::map<std::string, Setter>& keys, const std::string& section,
                      LearnerConfig ExperimentConfig::*member) {
  keys[section + ".algorithm"] = [member](ExperimentConfig& c, std::string_view v) {
    (c.*member).algorithm = parse_algorithm(v);
  };
  keys[section + ".learning_rate"] = [member](ExperimentConfig& c, std::string_view v) {
    (c.*member).learning_rate = text::parse_double(v);
  };
  keys[section + ".discount"] = [member](ExperimentConfig& c, std::string_view v) {
    (c.*member).discount = text::parse_double(v);
  };
  keys[section + ".epsilon_start"] = [member](ExperimentConfig& c, std::string_view v) {
    (c.*member).epsilon_start = text::parse_double(v);
  };
  keys[section + ".epsilon_end"] = [member](ExperimentConfig& c, std::string_view v) {
    (c.*member).epsilon_end = text::parse_double(v);
  };
  keys[section + ".epsilon_decay_fraction"] = [member](ExperimentConfig& c, std::string_view v) {
    (c.*member).epsilon_decay_fraction = text::parse_double(v);
  };
  keys[section + ".epsilon_decay"] = [member](ExperimentConfig& c, std::string_view v) {
    (c.*member).epsilon_decay = text::parse_double(v);
  };
}

std::map<std::string, Setter> key_table(const std::filesystem::path& base) {
  std::map<std::string, Setter> k;
  k["env.layout"] = [base](ExperimentConfig& c, std::string_view v) { c.layout = resolve(v, base); };
  k["env.variant"] = [](ExperimentConfig& c, std::string_view v) {
    if (v == "single_agent") {
      c.variant = EnvVariant::SingleAgent;
    } else if (v == "multi_agent") {
      c.variant = EnvVariant::MultiAgent;
    } else {
      throw std::invalid_argument("variant must be single_agent or multi_agent");
    }
  };
  k["transfer.source_layout"] = [base](ExperimentConfig& c, std::string_view v) {
    c.source_layout = resolve(v, base);
  };

  k["teacher.source"] = [](ExperimentConfig& c, std::string_view v) {
    if (v == "train") {
      c.teacher_dir.reset();
    } else if (v == "load") {
      if (!c.teacher_dir) c.teacher_dir = std::filesystem::path{};
    } else {
      throw std::invalid_argument("teacher source must be train or load");
    }
  };
  k["teacher.path"] = [base](ExperimentConfig& c, std::string_view v) { c.teacher_dir = resolve(v, base); };
  add_learner_keys(k, "teacher", &ExperimentConfig::teacher_learner);
  k["teacher.episodes"] = [](ExperimentConfig& c, std::string_view v) {
    c.teacher_learner.episodes = text::parse_uint<std::size_t>(v);
  };
  k["teacher.seed"] = [](ExperimentConfig& c, std::string_view v) { c.teacher_seed = text::parse_uint(v); };
  k["teacher.min_reward_fraction"] = [](ExperimentConfig& c, std::string_view v) {
    c.teacher_min_fraction = text::parse_double(v);
  };
  k["teacher.eval_episodes"] = [](ExperimentConfig& c, std::string_view v) {
    c.teacher_eval_episodes = text::parse_uint<std::size_t>(v);
  };

  auto distill_count = [&k](const std::string& key, std::size_t DistillConfig::*m) {
    k["distill." + key] = [m](ExperimentConfig& c, std::string_view v) {
      c.distill.*m = text::parse_uint<std::size_t>(v);
    };
  };
  distill_count("iterations", &DistillConfig::iterations);
  distill_count("rollouts", &DistillConfig::rollouts);
  distill_count("resample_size", &DistillConfig::resample_size);
  distill_count("max_depth", &DistillConfig::max_depth);
  distill_count("min_samples_split", &DistillConfig::min_samples_split);
  distill_count("eval_episodes", &DistillConfig::eval_episodes);
  k["distill.seed"] = [](ExperimentConfig& c, std::string_view v) { c.distill.seed = text::parse_uint(v); };

  add_learner_keys(k, "student", &ExperimentConfig::student_learner);

  k["advising.mode"] = [](ExperimentConfig& c, std::string_view v) { c.mode = parse_mode_or_throw(v); };
  k["advising.heuristic"] = [](ExperimentConfig& c, std::string_view v) {
    if (v == "early") {
      c.advising.heuristic = EarlyAdvising{};
    } else if (v == "alternative") {
      c.advising.heuristic = AlternativeAdvising{};
    } else if (v == "importance") {
      c.advising.heuristic = ImportanceAdvising{};
    } else if (v == "mistake_correcting") {
      c.advising.heuristic = MistakeCorrecting{};
    } else {
      throw std::invalid_argument("unknown heuristic '" + std::string(v) + "'");
    }
  };
  k["advising.period"] = [](ExperimentConfig& c, std::string_view v) {
    auto* alt = std::get_if<AlternativeAdvising>(&c.advising.heuristic);
    if (!alt) throw std::invalid_argument("needs heuristic = alternative on an earlier line");
    alt->period = text::parse_uint<std::size_t>(v);
  };
  k["advising.importance_threshold"] = [](ExperimentConfig& c, std::string_view v) {
    const double t = text::parse_double(v);
    if (auto* h = std::get_if<ImportanceAdvising>(&c.advising.heuristic)) {
      h->threshold = t;
    } else if (auto* m = std::get_if<MistakeCorrecting>(&c.advising.heuristic)) {
      m->threshold = t;
    } else {
      throw std::invalid_argument("needs heuristic = importance or mistake_correcting on an earlier line");
    }
  };
  k["advising.budget"] = [](ExperimentConfig& c, std::string_view v) {
    c.advising.budget = text::parse_uint<std::size_t>(v);
  };
  k["advising.decay"] = [](ExperimentConfig& c, std::string_view v) { c.advising.decay = text::parse_double(v); };
  k["advising.storage_threshold"] = [](ExperimentConfig& c, std::string_view v) {
    c.advising.storage_threshold = text::parse_double(v);
  };
  k["advising.pretrain_episodes"] = [](ExperimentConfig& c, std::string_view v) {
    c.pretrain_episodes = text::parse_uint<std::size_t>(v);
  };

  k["experiment.trials"] = [](ExperimentConfig& c, std::string_view v) {
    c.trials = text::parse_uint<std::size_t>(v);
  };
  k["experiment.seeds"] = [](ExperimentConfig& c, std::string_view v) {
    c.seeds.clear();
    for (auto item : list_items(v)) c.seeds.push_back(text::parse_uint(item));
  };
  k["experiment.episodes"] = [](ExperimentConfig& c, std::string_view v) {
    c.episodes = text::parse_uint<std::size_t>(v);
  };
  k["experiment.eval_cadence"] = [](ExperimentConfig& c, std::string_view v) {
    c.eval_cadence = text::parse_uint<std::size_t>(v);
  };
  k["experiment.eval_episodes"] = [](ExperimentConfig& c, std::string_view v) {
    c.eval_episodes = text::parse_uint<std::size_t>(v);
  };
  k["experiment.smoothing_window"] = [](ExperimentConfig& c, std::string_view v) {
    c.smoothing_window = text::parse_uint<std::size_t>(v);
  };
  k["experiment.output_dir"] = [](ExperimentConfig& c, std::string_view v) {
    c.output_dir = std::filesystem::path(std::string(v)).lexically_normal();
  };
  k["experiment.trace"] = [](ExperimentConfig& c, std::string_view v) { c.trace = parse_bool(v); };
  k["compare.modes"] = [](ExperimentConfig& c, std::string_view v) {
    c.compare_modes.clear();
    for (auto item : list_items(v)) c.compare_modes.push_back(parse_mode_or_throw(item));
  };
  return k;
}

}  // namespace

std::string_view mode_name(StudentMode mode) {
  for (const auto& [m, name] : kModeNames) {
    if (m == mode) return name;
  }
  return "?";
}

std::optional<StudentMode> parse_mode(std::string_view name) {
  for (const auto& [m, n] : kModeNames) {
    if (n == name) return m;
  }
  return std::nullopt;
}

void ExperimentConfig::validate() const {
  if (layout.empty()) throw ConfigError("env.layout is required");
  if (episodes < 1) throw ConfigError("experiment.episodes must be >= 1");
  if (teacher_dir && teacher_dir->empty()) throw ConfigError("teacher.source = load needs teacher.path");
  if (trials != seeds.size()) {
    throw ConfigError("experiment.trials (" + std::to_string(trials) + ") must equal the number of seeds (" +
                      std::to_string(seeds.size()) + ")");
  }
  if (eval_cadence < 1) throw ConfigError("experiment.eval_cadence must be >= 1");
  if (eval_episodes < 1) throw ConfigError("experiment.eval_episodes must be >= 1");
  if (smoothing_window < 1) throw ConfigError("experiment.smoothing_window must be >= 1");
  if (compare_modes.empty()) throw ConfigError("compare.modes must name at least one mode");
  try {
    teacher_learner.validate();
    LearnerConfig s = student_learner;
    s.episodes = episodes;
    s.validate();
    distill.validate();
    AdvisingSession::start(advising);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  const auto keys = key_table(base_dir);
  ExperimentConfig c;
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto line = text::trim(text::strip_comment(raw));
    if (line.empty()) continue;
    const auto where = "line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = std::string(text::trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    const auto key = text::trim(line.substr(0, eq));
    const auto value = text::trim(line.substr(eq + 1));
    const auto full = section + "." + std::string(key);
    const auto it = keys.find(full);
    if (it == keys.end()) throw ConfigError(where + "unknown key '" + full + "'");
    try {
      it->second(c, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where + full + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path());
}

std::string render_config(const ExperimentConfig& c) {
  std::ostringstream o;
  auto learner = [&o](const LearnerConfig& l) {
    o << "algorithm = " << algorithm_name(l.algorithm) << '\n'
      << "learning_rate = " << text::format_double(l.learning_rate) << '\n'
      << "discount = " << text::format_double(l.discount) << '\n'
      << "epsilon_start = " << text::format_double(l.epsilon_start) << '\n'
      << "epsilon_end = " << text::format_double(l.epsilon_end) << '\n'
      << "epsilon_decay_fraction = " << text::format_double(l.epsilon_decay_fraction) << '\n';
    if (l.epsilon_decay) o << "epsilon_decay = " << text::format_double(*l.epsilon_decay) << '\n';
  };

  o << "[env]\n"
    << "layout = " << c.layout.string() << '\n'
    << "variant = " << (c.variant == EnvVariant::SingleAgent ? "single_agent" : "multi_agent") << '\n';
  if (c.source_layout) o << "\n[transfer]\nsource_layout = " << c.source_layout->string() << '\n';

  o << "\n[teacher]\n";
  if (c.teacher_dir) {
    o << "source = load\npath = " << c.teacher_dir->string() << '\n';
  } else {
    o << "source = train\n";
  }
  learner(c.teacher_learner);
  o << "episodes = " << c.teacher_learner.episodes << '\n'
    << "seed = " << c.teacher_seed << '\n'
    << "eval_episodes = " << c.teacher_eval_episodes << '\n'
    << "min_reward_fraction = " << text::format_double(c.teacher_min_fraction) << '\n';

  o << "\n[distill]\n"
    << "iterations = " << c.distill.iterations << '\n'
    << "rollouts = " << c.distill.rollouts << '\n'
    << "resample_size = " << c.distill.resample_size << '\n'
    << "max_depth = " << c.distill.max_depth << '\n'
    << "min_samples_split = " << c.distill.min_samples_split << '\n'
    << "eval_episodes = " << c.distill.eval_episodes << '\n'
    << "seed = " << c.distill.seed << '\n';

  o << "\n[student]\n";
  learner(c.student_learner);

  o << "\n[advising]\n"
    << "mode = " << mode_name(c.mode) << '\n'
    << "heuristic = " << heuristic_name(c.advising.heuristic) << '\n';
  if (const auto* alt = std::get_if<AlternativeAdvising>(&c.advising.heuristic)) {
    o << "period = " << alt->period << '\n';
  }
  if (const auto* h = std::get_if<ImportanceAdvising>(&c.advising.heuristic)) {
    o << "importance_threshold = " << text::format_double(h->threshold) << '\n';
  }
  if (const auto* h = std::get_if<MistakeCorrecting>(&c.advising.heuristic)) {
    o << "importance_threshold = " << text::format_double(h->threshold) << '\n';
  }
  o << "budget = " << c.advising.budget << '\n'
    << "decay = " << text::format_double(c.advising.decay) << '\n'
    << "storage_threshold = " << text::format_double(c.advising.storage_threshold) << '\n'
    << "pretrain_episodes = " << c.pretrain_episodes << '\n';

  o << "\n[experiment]\n"
    << "trials = " << c.trials << '\n'
    << "seeds =";
  for (std::size_t i = 0; i < c.seeds.size(); ++i) o << (i ? ", " : " ") << c.seeds[i];
  o << '\n'
    << "episodes = " << c.episodes << '\n'
    << "eval_cadence = " << c.eval_cadence << '\n'
    << "eval_episodes = " << c.eval_episodes << '\n'
    << "smoothing_window = " << c.smoothing_window << '\n'
    << "output_dir = " << c.output_dir.string() << '\n'
    << "trace = " << (c.trace ? "true" : "false") << '\n';

  o << "\n[compare]\nmodes =";
  for (std::size_t i = 0; i < c.compare_modes.size(); ++i) o << (i ? ", " : " ") << mode_name(c.compare_modes[i]);
  o << '\n';
  return o.str();
}

}  // namespace eaa
