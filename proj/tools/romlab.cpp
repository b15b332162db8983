#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "romlab/experiment.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<unsigned> workers;
  std::vector<std::string> overrides;
};

void add_flags(CLI::App *cmd, Flags &f) {
  cmd->add_option("--config", f.config, "JSON config file");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--workers", f.workers, "worker threads");
  cmd->add_option("--override", f.overrides, "dotted key=value, value parsed as JSON")
      ->take_all();
}

int run_mode(const std::string &mode, const Flags &f) {
  nlohmann::json j = f.config.empty() ? nlohmann::json::object()
                                      : romlab::load_config_file(f.config);
  for (const auto &o : f.overrides)
    romlab::apply_override(j, o);
  j["mode"] = mode;
  if (f.seed)
    j["seed"] = *f.seed;
  if (!f.out.empty())
    j["output"] = f.out;
  if (f.workers)
    j["workers"] = *f.workers;
  const auto cfg = romlab::parse_config(j);
  const auto summary = romlab::run(cfg);
  std::cout << nlohmann::json{{"mode", mode},
                              {"output", cfg.output},
                              {"tasks", summary.tasks},
                              {"resumed_tasks", summary.resumed},
                              {"report", summary.report}}
                   .dump(2)
            << '\n';
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"romlab: interfaces in random obstacle fields"};
  app.require_subcommand(1);
  const std::vector<std::string> modes{"evolve", "stationary", "lemmas", "crossing",
                                       "phase-sweep"};
  std::vector<Flags> flags(modes.size());
  std::vector<CLI::App *> cmds;
  for (std::size_t k = 0; k < modes.size(); ++k) {
    cmds.push_back(app.add_subcommand(modes[k], "run the " + modes[k] + " experiment"));
    add_flags(cmds.back(), flags[k]);
  }
  std::string report_dir;
  auto *report = app.add_subcommand("report", "summarize an output directory");
  report->add_option("--out", report_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (report->parsed()) {
      std::cout << romlab::read_report(report_dir).dump(2) << '\n';
      return 0;
    }
    for (std::size_t k = 0; k < modes.size(); ++k)
      if (cmds[k]->parsed())
        return run_mode(modes[k], flags[k]);
  } catch (const romlab::ConfigError &e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
