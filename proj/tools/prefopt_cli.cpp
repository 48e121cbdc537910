// prefopt command-line front end. Talks to the library exclusively through
// the C API in prefopt.h; everything here is argument plumbing, config
// resolution and run-directory management.

#include <cstdio>
#include <ctime>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "prefopt.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliError {
  std::string code;
  std::string message;
  int exit_code;
};

[[noreturn]] void fail(const std::string& code, const std::string& message,
                       int exit_code = 2) {
  throw CliError{code, message, exit_code};
}

[[noreturn]] void fail_from_api(int status) {
  const char* code = prefopt_last_error_code();
  const char* message = prefopt_last_error();
  const bool validation =
      status == PREFOPT_ERR_CONFIG || status == PREFOPT_ERR_DATA ||
      status == PREFOPT_ERR_DIMENSION || status == PREFOPT_ERR_DOMAIN ||
      status == PREFOPT_ERR_USAGE;
  throw CliError{code[0] ? code : "INT001",
                 message[0] ? message : "unknown library error",
                 validation ? 2 : 1};
}

void check(int status) {
  if (status != PREFOPT_OK) fail_from_api(status);
}

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("CFG002", "cannot read config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    json j = json::parse(buf.str());
    if (!j.is_object()) fail("CFG002", "config must be a JSON object: " + path);
    return j;
  } catch (const json::exception& e) {
    fail("CFG002", "config parse error in " + path + ": " + e.what());
  }
}

// --set key=value overrides; the value is parsed as JSON when possible and
// falls back to a plain string.
void apply_overrides(json& cfg, const std::vector<std::string>& sets) {
  for (const std::string& kv : sets) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      fail("CFG003", "--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::exception&) {
      value = raw;
    }
    cfg[key] = value;
  }
}

void default_seed_from_env(json& cfg) {
  if (cfg.contains("seed")) return;
  const char* env = std::getenv("PREFOPT_SEED");
  if (env == nullptr || env[0] == '\0') return;
  try {
    cfg["seed"] = json::parse(env);
  } catch (const json::exception&) {
    fail("CFG003", std::string("PREFOPT_SEED is not a number: ") + env);
  }
}

// Run directory with staged outputs: everything lands in <out>/tmp and is
// promoted into <out> only when the command finished; timestamps go to the
// sidecar log, never into primary outputs.
class RunDir {
 public:
  explicit RunDir(const std::string& out) : root_(out), tmp_(root_ / "tmp") {
    std::error_code ec;
    fs::create_directories(tmp_, ec);
    if (ec) fail("IO001", "cannot create run directory: " + out, 1);
  }

  std::string stage(const std::string& name) const {
    return (tmp_ / name).string();
  }

  void write_resolved_config(const json& cfg) const {
    std::ofstream out(tmp_ / "config.resolved.json");
    out << cfg.dump(2) << "\n";
  }

  void log(const std::string& line) const {
    std::ofstream out(root_ / "run.log", std::ios::app);
    const std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%S", std::gmtime(&now));
    out << stamp << " " << line << "\n";
  }

  void promote() const {
    for (const auto& entry : fs::directory_iterator(tmp_)) {
      const fs::path target = root_ / entry.path().filename();
      std::error_code ec;
      fs::remove_all(target, ec);
      fs::rename(entry.path(), target, ec);
      if (ec)
        fail("IO001", "cannot promote output " + target.string(), 1);
    }
    fs::remove_all(tmp_);
  }

 private:
  fs::path root_;
  fs::path tmp_;
};

struct ModelHandle {
  prefopt_model* ptr = nullptr;
  ~ModelHandle() { prefopt_model_free(ptr); }
};

struct DatasetHandle {
  prefopt_dataset* ptr = nullptr;
  ~DatasetHandle() { prefopt_dataset_free(ptr); }
};

// Opens a model either from --checkpoint or from the config's model block.
void open_model(const std::string& checkpoint, const json& cfg,
                ModelHandle* model) {
  if (!checkpoint.empty()) {
    check(prefopt_model_load(checkpoint.c_str(), &model->ptr));
    return;
  }
  const json model_cfg =
      cfg.contains("model") ? cfg.at("model") : json::object();
  const uint64_t seed =
      cfg.contains("seed") ? cfg.at("seed").get<uint64_t>() : 0;
  check(prefopt_model_create(model_cfg.dump().c_str(), seed, &model->ptr));
}

json train_api_config(const json& cfg) {
  json out = cfg;
  out.erase("model");
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"structure-conditioned sequence scoring, preference training "
               "and screening"};
  app.require_subcommand(1);

  std::string config_path, data_path, out_dir, structures_dir, structure_path,
      checkpoint, objective;
  std::vector<std::string> overrides;

  auto add_common = [&](CLI::App* cmd, bool needs_data) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--out", out_dir, "run directory for outputs");
    cmd->add_option("--set", overrides, "override config key=value");
    if (needs_data) cmd->add_option("--data", data_path, "input data file");
    return cmd;
  };

  CLI::App* synth = add_common(app.add_subcommand("synth",
      "generate a synthetic assay benchmark with a hidden oracle"), false);
  CLI::App* train = add_common(app.add_subcommand("train",
      "fine-tune the decoder with nll/dpo/simpo"), true);
  train->add_option("--structures", structures_dir, "structure JSON directory");
  train->add_option("--objective", objective, "nll|dpo|simpo");
  train->add_option("--checkpoint", checkpoint, "initial checkpoint");
  CLI::App* score = add_common(app.add_subcommand("score",
      "score dataset records with a model"), true);
  score->add_option("--structures", structures_dir, "structure JSON directory");
  score->add_option("--checkpoint", checkpoint, "model checkpoint");
  CLI::App* eval = add_common(app.add_subcommand("eval",
      "ranking metrics from a scores CSV"), true);
  CLI::App* generate = add_common(app.add_subcommand("generate",
      "sample constrained variants of a structure's sequence"), false);
  generate->add_option("--structure", structure_path, "structure JSON file");
  generate->add_option("--checkpoint", checkpoint, "model checkpoint");
  CLI::App* screen = add_common(app.add_subcommand("screen",
      "two-stage screen of a variants CSV"), true);
  screen->add_option("--structure", structure_path, "structure JSON file");
  CLI::App* paratope = add_common(app.add_subcommand("paratope",
      "train/evaluate the frozen-base binding-site head"), true);
  paratope->add_option("--structures", structures_dir,
                       "structure JSON directory");
  paratope->add_option("--checkpoint", checkpoint, "model checkpoint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::ostringstream msg;
    msg << e.what();
    throw CliError{"CFG001", msg.str(), 2};
  }

  if (config_path.empty()) fail("CFG001", "missing required flag --config");
  if (out_dir.empty()) fail("CFG001", "missing required flag --out");

  json cfg = load_config(config_path);
  apply_overrides(cfg, overrides);
  default_seed_from_env(cfg);

  RunDir run_dir(out_dir);
  {
    std::ostringstream line;
    for (int i = 0; i < argc; ++i) line << (i ? " " : "") << argv[i];
    run_dir.log("start: " + line.str());
  }

  if (synth->parsed()) {
    run_dir.write_resolved_config(cfg);
    check(prefopt_synth(cfg.dump().c_str(), run_dir.stage("").c_str()));
  } else if (train->parsed()) {
    if (data_path.empty()) fail("CFG001", "missing required flag --data");
    if (structures_dir.empty())
      fail("CFG001", "missing required flag --structures");
    if (!objective.empty()) cfg["objective"] = objective;
    if (!cfg.contains("objective"))
      fail("CFG001", "missing required flag --objective");
    run_dir.write_resolved_config(cfg);
    DatasetHandle dataset;
    check(prefopt_dataset_load(data_path.c_str(), &dataset.ptr));
    ModelHandle model;
    open_model(checkpoint, cfg, &model);
    check(prefopt_train(model.ptr, dataset.ptr, structures_dir.c_str(),
                        train_api_config(cfg).dump().c_str(),
                        run_dir.stage("").c_str()));
  } else if (score->parsed()) {
    if (data_path.empty()) fail("CFG001", "missing required flag --data");
    if (structures_dir.empty())
      fail("CFG001", "missing required flag --structures");
    if (checkpoint.empty() && !cfg.contains("model") && !cfg.contains("seed"))
      fail("CFG001", "score needs --checkpoint or a model block in the config");
    run_dir.write_resolved_config(cfg);
    DatasetHandle dataset;
    check(prefopt_dataset_load(data_path.c_str(), &dataset.ptr));
    ModelHandle model;
    open_model(checkpoint, cfg, &model);
    json api = cfg;
    api.erase("model");
    api.erase("seed");
    check(prefopt_score(model.ptr, dataset.ptr, structures_dir.c_str(),
                        api.dump().c_str(),
                        run_dir.stage("scores.csv").c_str()));
  } else if (eval->parsed()) {
    if (data_path.empty()) fail("CFG001", "missing required flag --data");
    run_dir.write_resolved_config(cfg);
    check(prefopt_eval(data_path.c_str(), cfg.dump().c_str(),
                       run_dir.stage("report.csv").c_str(),
                       run_dir.stage("report.json").c_str()));
  } else if (generate->parsed()) {
    if (structure_path.empty())
      fail("CFG001", "missing required flag --structure");
    run_dir.write_resolved_config(cfg);
    ModelHandle model;
    open_model(checkpoint, cfg, &model);
    json api = cfg;
    api.erase("model");
    check(prefopt_generate(model.ptr, structure_path.c_str(),
                           api.dump().c_str(),
                           run_dir.stage("variants.csv").c_str()));
  } else if (screen->parsed()) {
    if (data_path.empty()) fail("CFG001", "missing required flag --data");
    if (structure_path.empty())
      fail("CFG001", "missing required flag --structure");
    run_dir.write_resolved_config(cfg);
    check(prefopt_screen(data_path.c_str(), structure_path.c_str(),
                         cfg.dump().c_str(),
                         run_dir.stage("panel.json").c_str(),
                         run_dir.stage("score_table.csv").c_str()));
  } else if (paratope->parsed()) {
    if (data_path.empty()) fail("CFG001", "missing required flag --data");
    if (structures_dir.empty())
      fail("CFG001", "missing required flag --structures");
    run_dir.write_resolved_config(cfg);
    ModelHandle model;
    open_model(checkpoint, cfg, &model);
    json api = cfg;
    api.erase("model");
    check(prefopt_paratope(model.ptr, data_path.c_str(),
                           structures_dir.c_str(), api.dump().c_str(),
                           run_dir.stage("").c_str()));
  }

  run_dir.promote();
  run_dir.log("done");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const CliError& e) {
    std::cerr << "ERROR " << e.code << ": " << e.message << "\n";
    return e.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "ERROR INT001: " << e.what() << "\n";
    return 1;
  }
}
