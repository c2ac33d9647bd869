// Command-line driver: train-teacher, distill, run, compare, export.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <regex>
#include <sstream>
#include <string>

#include "eaa/harness.hpp"
#include "eaa/text.hpp"

namespace fs = std::filesystem;
using namespace eaa;

namespace {

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

ExperimentConfig load(const GlobalOptions& g) {
  if (g.config.empty()) throw ConfigError("--config is required");
  auto c = load_config(g.config);
  if (!g.out.empty()) c.output_dir = g.out;
  return c;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

template <typename Writer>
void write_with(const fs::path& path, Writer&& writer) {
  std::ostringstream buf;
  writer(buf);
  write_file(path, buf.str());
}

void write_teacher(const fs::path& dir, const Artifacts& a) {
  write_with(dir / "teacher.qt", [&](std::ostream& o) { write_qtables(o, a.teacher); });
}

void write_trees_dir(const fs::path& dir, const Artifacts& a) {
  write_with(dir / "teacher.tree", [&](std::ostream& o) { write_trees(o, a.trees); });
  if (!a.distill) return;
  const auto cand_dir = dir / "candidates";
  fs::create_directories(cand_dir);
  std::ostringstream summary;
  summary << "iteration,score,dataset_size,selected\n";
  for (const auto& c : a.distill->candidates) {
    write_with(cand_dir / ("candidate_" + std::to_string(c.iteration) + ".tree"),
               [&](std::ostream& o) { write_trees(o, c.trees); });
    summary << c.iteration << ',' << text::format_double(c.score) << ',' << c.dataset_size << ','
            << (c.iteration == a.distill->selected ? 1 : 0) << '\n';
  }
  write_file(cand_dir / "summary.csv", summary.str());
}

void write_curves(const fs::path& dir, StudentMode mode, const std::vector<std::vector<EpisodeRecord>>& trials,
                  std::size_t window) {
  const std::string name(mode_name(mode));
  export_csv(aggregate(trials, RewardColumn::Training), dir / ("curve_" + name + ".csv"), window);
  export_csv(aggregate(trials, RewardColumn::Evaluation), dir / ("curve_" + name + "_eval.csv"), window);
}

std::vector<std::vector<EpisodeRecord>> run_mode(const ExperimentConfig& c, const Artifacts& a, StudentMode mode,
                                                 const fs::path& trial_dir) {
  fs::create_directories(trial_dir);
  std::vector<std::vector<EpisodeRecord>> trials;
  if (c.trace) {
    for (auto seed : c.seeds) {
      std::ostringstream trace;
      trials.push_back(run_trial(c, a, mode, seed, &trace));
      write_file(trial_dir / ("trace_" + std::to_string(seed) + ".csv"), trace.str());
    }
  } else {
    trials = run_trials(c, a, mode, c.seeds);
  }
  for (std::size_t k = 0; k < trials.size(); ++k) {
    write_with(trial_dir / ("trial_" + std::to_string(c.seeds[k]) + ".csv"),
               [&](std::ostream& o) { write_trial_csv(o, trials[k]); });
  }
  return trials;
}

void cmd_train_teacher(const GlobalOptions& g) {
  auto c = load(g);
  if (g.seed) c.teacher_seed = *g.seed;
  c.teacher_dir.reset();
  fs::create_directories(c.output_dir);
  const auto a = prepare_artifacts(c, false);
  write_teacher(c.output_dir, a);
  write_file(c.output_dir / "config.lock", render_config(c));
  std::cout << "teacher eval reward " << text::format_double(a.teacher_reward) << " (optimum "
            << text::format_double(a.source.optimal_reward()) << "), wrote " << (c.output_dir / "teacher.qt").string()
            << '\n';
}

void cmd_distill(const GlobalOptions& g) {
  auto c = load(g);
  if (g.seed) c.distill.seed = *g.seed;
  fs::create_directories(c.output_dir);
  // Reuse a teacher already in the output directory; distil afresh either way.
  if (!c.teacher_dir && fs::exists(c.output_dir / "teacher.qt")) c.teacher_dir = c.output_dir;
  auto a = prepare_artifacts(c, false);
  a.distill = viper(a.source, a.teacher, c.distill);
  a.trees = a.distill->trees();
  write_teacher(c.output_dir, a);
  write_trees_dir(c.output_dir, a);
  write_file(c.output_dir / "config.lock", render_config(c));
  std::cout << "selected candidate " << a.distill->selected << " of " << a.distill->candidates.size()
            << ", tree reward " << text::format_double(a.distill->score()) << ", depths";
  for (const auto& t : a.trees) std::cout << ' ' << t.depth();
  std::cout << '\n';
}

ExperimentConfig with_seed_override(ExperimentConfig c, const GlobalOptions& g) {
  if (g.seed) {
    c.seeds = {*g.seed};
    c.trials = 1;
  }
  return c;
}

void cmd_run(const GlobalOptions& g) {
  const auto c = with_seed_override(load(g), g);
  fs::create_directories(c.output_dir);
  const auto a = prepare_artifacts(c, true);
  if (!c.teacher_dir) write_teacher(c.output_dir, a);
  write_trees_dir(c.output_dir, a);
  write_file(c.output_dir / "config.lock", render_config(c));
  const auto trials = run_mode(c, a, c.mode, c.output_dir);
  write_curves(c.output_dir, c.mode, trials, c.smoothing_window);
  std::cout << "ran " << trials.size() << " trial(s) of mode " << mode_name(c.mode) << " into "
            << c.output_dir.string() << '\n';
}

void cmd_compare(const GlobalOptions& g) {
  const auto c = with_seed_override(load(g), g);
  fs::create_directories(c.output_dir);
  const auto a = prepare_artifacts(c, true);
  if (!c.teacher_dir) write_teacher(c.output_dir, a);
  write_trees_dir(c.output_dir, a);
  write_file(c.output_dir / "config.lock", render_config(c));

  const double target = 0.9 * a.teacher_reward;
  std::ostringstream summary;
  summary << "mode,seed,episodes_to_90,exhaustion_episode,final_mean_reward\n";
  for (auto mode : c.compare_modes) {
    const std::string name(mode_name(mode));
    const auto trials = run_mode(c, a, mode, c.output_dir / name);
    write_curves(c.output_dir, mode, trials, c.smoothing_window);
    for (std::size_t k = 0; k < trials.size(); ++k) {
      const auto& t = trials[k];
      const auto reach = episodes_to_reach(t, target);
      const auto ex = exhaustion_episode(t);
      const std::size_t tail = std::min<std::size_t>(1000, t.size());
      double sum = 0.0;
      for (std::size_t e = t.size() - tail; e < t.size(); ++e) sum += t[e].reward;
      summary << name << ',' << c.seeds[k] << ',' << (reach ? std::to_string(*reach) : "") << ','
              << (ex ? std::to_string(*ex) : "") << ',' << text::format_double(tail ? sum / tail : 0.0) << '\n';
    }
    std::cout << "mode " << name << ": " << trials.size() << " trial(s)\n";
  }
  write_file(c.output_dir / "summary.csv", summary.str());
}

void cmd_export(const GlobalOptions& g, const std::string& mode_arg, std::optional<std::size_t> window) {
  std::size_t w = window.value_or(50);
  fs::path dir = g.out;
  std::optional<StudentMode> mode;
  if (!g.config.empty()) {
    const auto c = load(g);
    dir = c.output_dir;
    mode = c.mode;
    if (!window) w = c.smoothing_window;
  }
  if (!mode_arg.empty()) {
    mode = parse_mode(mode_arg);
    if (!mode) throw ConfigError("unknown mode '" + mode_arg + "'");
  }
  if (dir.empty()) throw ConfigError("--out or --config is required");
  if (!mode) throw ConfigError("--mode or --config is required");
  if (w == 0) throw ConfigError("--window must be >= 1");

  fs::path trial_dir = dir / std::string(mode_name(*mode));
  if (!fs::is_directory(trial_dir)) trial_dir = dir;
  const std::regex name_re("trial_([0-9]+)\\.csv");
  std::vector<std::pair<std::uint64_t, fs::path>> files;
  for (const auto& entry : fs::directory_iterator(trial_dir)) {
    std::smatch m;
    const auto fname = entry.path().filename().string();
    if (std::regex_match(fname, m, name_re)) files.emplace_back(text::parse_uint(m[1].str()), entry.path());
  }
  if (files.empty()) throw std::runtime_error("no trial_<seed>.csv files in '" + trial_dir.string() + "'");
  std::sort(files.begin(), files.end());
  std::vector<std::vector<EpisodeRecord>> trials;
  for (const auto& [seed, path] : files) {
    std::ifstream in(path);
    trials.push_back(read_trial_csv(in, seed));
  }
  write_curves(dir, *mode, trials, w);
  std::cout << "exported " << trials.size() << " trial(s) to " << (dir / ("curve_" + std::string(mode_name(*mode)) + ".csv")).string()
            << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explainable action advising experiments"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config, "experiment config file");
  app.add_option("--seed", g.seed, "seed override");
  app.add_option("--out", g.out, "output directory (overrides experiment.output_dir)");

  auto* train = app.add_subcommand("train-teacher", "train the tabular teacher and write teacher.qt");
  auto* distill = app.add_subcommand("distill", "distil the teacher into decision trees (teacher.tree)");
  auto* run = app.add_subcommand("run", "run the configured mode over all seeds");
  auto* compare = app.add_subcommand("compare", "run every compare.modes entry over the same seeds");
  auto* exp = app.add_subcommand("export", "re-aggregate trial CSVs into curve CSVs");
  std::string mode_arg;
  std::optional<std::size_t> window;
  exp->add_option("--mode", mode_arg, "mode whose trials to aggregate");
  exp->add_option("--window", window, "trailing smoothing window");
  for (auto* sub : {train, distill, run, compare, exp}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*train) cmd_train_teacher(g);
    if (*distill) cmd_distill(g);
    if (*run) cmd_run(g);
    if (*compare) cmd_compare(g);
    if (*exp) cmd_export(g, mode_arg, window);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << msg << '\n';
    return 1;
  }
  return 0;
}
