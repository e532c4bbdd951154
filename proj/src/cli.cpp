#include "caipi/cli.hpp"

#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <httplib.h>

#include "caipi/config.hpp"
#include "caipi/error.hpp"
#include "caipi/eval.hpp"
#include "caipi/service.hpp"

namespace caipi {
namespace {

namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

ExperimentConfig load_config_with_seed(const std::string& path, std::optional<std::uint64_t> seed) {
  ExperimentConfig config = load_experiment_config(path);
  if (seed) {
    config.pools.seed = *seed;
    config.session.seed = *seed;
  }
  return config;
}

std::string slug(Mode mode, int c) {
  return (mode == Mode::rwr_only ? std::string("rwr") : std::string("rwr_plus_w")) + "_c" +
         std::to_string(c);
}

httplib::Server* g_server = nullptr;
void stop_server(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Interactive explainable image classification workbench", "caipi"};
  app.require_subcommand(1);

  auto* dataset_cmd = app.add_subcommand("dataset", "Fetch or prepare datasets");
  dataset_cmd->require_subcommand(1);
  auto* fetch_cmd = dataset_cmd->add_subcommand("fetch", "Download a dataset");
  std::string fetch_name;
  std::string fetch_dest;
  std::string fetch_base = kFashionBaseUrl;
  fetch_cmd->add_option("name", fetch_name, "fashion or medical")
      ->required()
      ->check(CLI::IsMember({"fashion", "medical"}));
  fetch_cmd->add_option("--dest", fetch_dest, "Target directory")->required();
  fetch_cmd->add_option("--base-url", fetch_base, "Mirror serving the Fashion-MNIST files");

  auto* prepare_cmd = dataset_cmd->add_subcommand(
      "prepare", "Load the configured dataset and write a normalized binary cache");
  std::string prepare_config;
  std::string prepare_out;
  prepare_cmd->add_option("--config", prepare_config, "Experiment config file")->required();
  prepare_cmd->add_option("--out", prepare_out, "Cache file to write")->required();

  auto* experiment_cmd = app.add_subcommand("experiment", "Simulated-oracle experiments");
  experiment_cmd->require_subcommand(1);
  auto* experiment_run = experiment_cmd->add_subcommand("run", "Run the configured grid");
  std::string experiment_config;
  std::string experiment_out = "runs/experiment";
  std::optional<std::uint64_t> experiment_seed;
  experiment_run->add_option("--config", experiment_config, "Experiment config file")->required();
  experiment_run->add_option("--out", experiment_out, "Output directory");
  experiment_run->add_option("--seed", experiment_seed, "Overrides pools.seed and session.seed");

  auto* baseline_cmd = app.add_subcommand("baseline", "Conventional training baseline");
  baseline_cmd->require_subcommand(1);
  auto* baseline_run = baseline_cmd->add_subcommand("run", "Train once on a large labeled split");
  std::string baseline_config;
  std::string baseline_out;
  std::optional<std::uint64_t> baseline_seed;
  baseline_run->add_option("--config", baseline_config, "Experiment config file")->required();
  baseline_run->add_option("--out", baseline_out, "Output directory (optional)");
  baseline_run->add_option("--seed", baseline_seed, "Overrides pools.seed and session.seed");

  auto* serve_cmd = app.add_subcommand("serve", "Serve interactive sessions over HTTP");
  std::string serve_config;
  std::string serve_host = "127.0.0.1";
  int serve_port = 8080;
  bool serve_multi = false;
  std::optional<std::uint64_t> serve_seed;
  serve_cmd->add_option("--config", serve_config, "Experiment config file")->required();
  serve_cmd->add_option("--port", serve_port, "Port")->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--host", serve_host, "Bind address");
  serve_cmd->add_flag("--multi-session", serve_multi, "Allow several live sessions");
  serve_cmd->add_option("--seed", serve_seed, "Overrides pools.seed and session.seed");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*fetch_cmd) {
      if (fetch_name == "medical") {
        err << medical_mnist_instructions(fetch_dest);
        return 1;
      }
      fetch_fashion_mnist(fetch_base, fetch_dest, out);
      out << "done: " << fetch_dest << '\n';
      return 0;
    }
    if (*prepare_cmd) {
      const ExperimentConfig config = load_experiment_config(prepare_config);
      const Dataset dataset = load_dataset(config.dataset);
      write_dataset_cache(dataset, prepare_out);
      out << "wrote " << dataset.size() << " instances (" << dataset.class_names[0] << ": "
          << dataset.count(0) << ", " << dataset.class_names[1] << ": " << dataset.count(1)
          << ") to " << prepare_out << '\n';
      return 0;
    }
    if (*experiment_run) {
      const ExperimentConfig config = load_config_with_seed(experiment_config, experiment_seed);
      const fs::path dir = experiment_out;
      fs::create_directories(dir / "events");
      write_text(dir / "effective_config.json", config_to_json(config).dump(2) + "\n");
      std::map<std::string, std::unique_ptr<std::ofstream>> logs;
      ExperimentHooks hooks;
      hooks.progress = [&](const std::string& msg) { err << msg << std::endl; };
      hooks.event_log = [&](Mode mode, int c) -> std::ostream* {
        const std::string name = slug(mode, c);
        auto stream = std::make_unique<std::ofstream>(dir / "events" / (name + ".jsonl"));
        if (!*stream) throw Error("cannot write event log " + name);
        return (logs[name] = std::move(stream)).get();
      };
      const ExperimentResult result = run_experiment(config, hooks);
      write_text(dir / "results.json", result_to_json(result).dump(2) + "\n");
      const std::string tables = format_tables(result);
      write_text(dir / "tables.txt", tables);
      out << tables;
      return 0;
    }
    if (*baseline_run) {
      const ExperimentConfig config = load_config_with_seed(baseline_config, baseline_seed);
      const Dataset dataset = load_dataset(config.dataset);
      const BaselineResult r = train_baseline(dataset, config.baseline_train, config.baseline_test,
                                              config.session.model, config.pools.seed);
      const Json j = {{"dataset", config.dataset.name},
                      {"class_names", dataset.class_names},
                      {"n_train", r.n_train},
                      {"n_test", r.n_test},
                      {"accuracy", r.accuracy},
                      {"train_log", r.train_log},
                      {"model", config_to_json(config.session.model)}};
      if (!baseline_out.empty()) {
        fs::create_directories(baseline_out);
        write_text(fs::path(baseline_out) / "effective_config.json",
                   config_to_json(config).dump(2) + "\n");
        write_text(fs::path(baseline_out) / "baseline.json", j.dump(2) + "\n");
      }
      char line[128];
      std::snprintf(line, sizeof line, "baseline %s: %zu train / %zu test, accuracy %.2f%%\n",
                    config.dataset.name.c_str(), r.n_train, r.n_test, 100.0 * r.accuracy);
      out << line;
      return 0;
    }
    if (*serve_cmd) {
      ServiceOptions options;
      options.experiment = load_config_with_seed(serve_config, serve_seed);
      options.allow_multiple_sessions = serve_multi;
      SessionService service(std::move(options));
      httplib::Server server;
      mount(server, service);
      g_server = &server;
      std::signal(SIGINT, stop_server);
      std::signal(SIGTERM, stop_server);
      if (!server.bind_to_port(serve_host, serve_port)) {
        throw Error("cannot bind " + serve_host + ":" + std::to_string(serve_port));
      }
      out << "listening on http://" << serve_host << ":" << serve_port << std::endl;
      server.listen_after_bind();
      g_server = nullptr;
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  err << app.help();
  return 2;
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace caipi
