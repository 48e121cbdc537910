#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "core/evalkit.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  const std::string command = std::string(PREFOPT_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(command.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult result;
  char buf[512];
  while (fgets(buf, sizeof(buf), pipe) != nullptr) result.output += buf;
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("prefopt_cli_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string sub(const std::string& name) const {
    return (path / name).string();
  }
};

void write(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

const char* kSynthConfig =
    R"({"seed": 3, "n_assays": 2, "variants_per_assay": 40,
        "sequence_length": 10, "antigen_length": 4, "max_mutations": 2,
        "noise_sd": 0.1})";

}  // namespace

TEST_CASE("missing --config exits 2 with the CFG001 prefix") {
  RunResult r = run_cli("synth");
  CHECK(r.exit_code == 2);
  CHECK(r.output.rfind("ERROR CFG001:", 0) == 0);
}

TEST_CASE("unknown config key surfaces as a machine-parsable error") {
  TempDir tmp("badkey");
  write(tmp.sub("cfg.json"), R"({"bogus_key": 1})");
  RunResult r = run_cli("synth --config " + tmp.sub("cfg.json") + " --out " +
                        tmp.sub("run"));
  CHECK(r.exit_code == 2);
  CHECK(r.output.rfind("ERROR CFG003:", 0) == 0);
  CHECK(r.output.find("bogus_key") != std::string::npos);
}

TEST_CASE("reruns produce byte-identical primary outputs") {
  TempDir tmp("rerun");
  write(tmp.sub("cfg.json"), kSynthConfig);
  REQUIRE(run_cli("synth --config " + tmp.sub("cfg.json") + " --out " +
                  tmp.sub("a")).exit_code == 0);
  REQUIRE(run_cli("synth --config " + tmp.sub("cfg.json") + " --out " +
                  tmp.sub("b")).exit_code == 0);
  CHECK(slurp(tmp.sub("a") + "/assays.csv") == slurp(tmp.sub("b") + "/assays.csv"));
  CHECK(slurp(tmp.sub("a") + "/oracle.json") ==
        slurp(tmp.sub("b") + "/oracle.json"));
  CHECK(slurp(tmp.sub("a") + "/config.resolved.json") ==
        slurp(tmp.sub("b") + "/config.resolved.json"));

  SUBCASE("no tmp staging directory is left behind") {
    CHECK(!fs::exists(tmp.sub("a") + "/tmp"));
  }
}

TEST_CASE("train with lr=0 leaves the model at its initialization") {
  TempDir tmp("lr0");
  write(tmp.sub("synth.json"), kSynthConfig);
  REQUIRE(run_cli("synth --config " + tmp.sub("synth.json") + " --out " +
                  tmp.sub("bench")).exit_code == 0);
  write(tmp.sub("train.json"),
        R"({"seed": 4, "model": {"d": 16, "heads": 2, "k_neighbors": 3},
            "objective": "simpo", "epochs": 1, "batch_size": 8,
            "delta_min": 0.2, "max_pairs": 50, "lr": 0.0,
            "weight_decay": 0.0, "split": {"mode": "supervised", "seed": 9}})");
  RunResult train = run_cli("train --config " + tmp.sub("train.json") +
                            " --data " + tmp.sub("bench") + "/assays.csv" +
                            " --structures " + tmp.sub("bench") + "/structures" +
                            " --out " + tmp.sub("run"));
  REQUIRE(train.exit_code == 0);

  // scoring with the trained checkpoint must equal scoring a fresh model
  // built from the same seed and dims
  write(tmp.sub("score.json"),
        R"({"seed": 4, "model": {"d": 16, "heads": 2, "k_neighbors": 3}})");
  REQUIRE(run_cli("score --config " + tmp.sub("score.json") + " --data " +
                  tmp.sub("bench") + "/assays.csv --structures " +
                  tmp.sub("bench") + "/structures --out " +
                  tmp.sub("fresh")).exit_code == 0);
  write(tmp.sub("score2.json"), R"({})");
  REQUIRE(run_cli("score --config " + tmp.sub("score2.json") + " --data " +
                  tmp.sub("bench") + "/assays.csv --structures " +
                  tmp.sub("bench") + "/structures --checkpoint " +
                  tmp.sub("run") + "/checkpoint_final.bin --out " +
                  tmp.sub("ckpt")).exit_code == 0);
  CHECK(slurp(tmp.sub("fresh") + "/scores.csv") ==
        slurp(tmp.sub("ckpt") + "/scores.csv"));
}

TEST_CASE("eval report matches evalkit called directly") {
  TempDir tmp("evalmatch");
  // pre-supplied model_score column
  write(tmp.sub("scores.csv"),
        "assay_id,variant_id,model_score,binding_score,score_type,"
        "pkd_wildtype\n"
        "a1,v1,0.9,9.1,neg_log_kd,8\n"
        "a1,v2,0.5,8.4,neg_log_kd,8\n"
        "a1,v3,0.7,9.3,neg_log_kd,8\n"
        "a1,v4,0.1,7.9,neg_log_kd,8\n");
  REQUIRE(run_cli("eval --config /dev/null --data " + tmp.sub("scores.csv") +
                  " --out " + tmp.sub("run")).exit_code == 2);
  write(tmp.sub("eval.json"), "{}");
  REQUIRE(run_cli("eval --config " + tmp.sub("eval.json") + " --data " +
                  tmp.sub("scores.csv") + " --out " +
                  tmp.sub("run")).exit_code == 0);

  const double rho =
      prefopt::evalkit::spearman({0.9, 0.5, 0.7, 0.1}, {9.1, 8.4, 9.3, 7.9});
  std::vector<prefopt::evalkit::RankedRow> rows = {
      {"v1", 0.9, 9.1, 8.0},
      {"v2", 0.5, 8.4, 8.0},
      {"v3", 0.7, 9.3, 8.0},
      {"v4", 0.1, 7.9, 8.0}};
  const double p10 = prefopt::evalkit::precision_at_k(rows).value;

  const std::string report = slurp(tmp.sub("run") + "/report.csv");
  std::ostringstream expect;
  expect << "a1,4," << rho << "," << p10;
  CHECK(report.find("a1,4,") != std::string::npos);
  // parse the emitted row and compare numerically
  std::istringstream lines(report);
  std::string line;
  bool found = false;
  while (std::getline(lines, line)) {
    if (line.rfind("a1,", 0) != 0) continue;
    found = true;
    std::vector<std::string> fields;
    std::istringstream fs_(line);
    std::string field;
    while (std::getline(fs_, field, ',')) fields.push_back(field);
    REQUIRE(fields.size() >= 4);
    CHECK(std::stod(fields[2]) == doctest::Approx(rho).epsilon(1e-12));
    CHECK(std::stod(fields[3]) == doctest::Approx(p10).epsilon(1e-12));
  }
  CHECK(found);
}

TEST_CASE("PREFOPT_SEED provides the default seed") {
  TempDir tmp("envseed");
  write(tmp.sub("cfg.json"),
        R"({"n_assays": 1, "variants_per_assay": 5, "sequence_length": 8,
            "antigen_length": 4, "max_mutations": 1, "noise_sd": 0})");
  const std::string base = "synth --config " + tmp.sub("cfg.json") + " --out ";
  const std::string cmd_a =
      "env PREFOPT_SEED=77 " + std::string(PREFOPT_CLI_PATH) + " " + base +
      tmp.sub("a");
  const std::string cmd_b =
      "env PREFOPT_SEED=78 " + std::string(PREFOPT_CLI_PATH) + " " + base +
      tmp.sub("b");
  REQUIRE(std::system((cmd_a + " > /dev/null 2>&1").c_str()) == 0);
  REQUIRE(std::system((cmd_b + " > /dev/null 2>&1").c_str()) == 0);
  CHECK(slurp(tmp.sub("a") + "/assays.csv") != slurp(tmp.sub("b") + "/assays.csv"));
  const std::string resolved = slurp(tmp.sub("a") + "/config.resolved.json");
  CHECK(resolved.find("\"seed\": 77") != std::string::npos);
}

TEST_CASE("full pipeline: synth -> train -> generate -> screen") {
  TempDir tmp("pipe");
  write(tmp.sub("synth.json"), kSynthConfig);
  REQUIRE(run_cli("synth --config " + tmp.sub("synth.json") + " --out " +
                  tmp.sub("bench")).exit_code == 0);
  write(tmp.sub("train.json"),
        R"({"seed": 4, "model": {"d": 16, "heads": 2, "k_neighbors": 3},
            "epochs": 1, "batch_size": 8, "beta": 1.0, "delta_min": 0.2,
            "max_pairs": 60, "lr": 0.002, "score_span": "antibody_only",
            "split": {"mode": "supervised", "seed": 9}})");
  REQUIRE(run_cli("train --config " + tmp.sub("train.json") + " --objective simpo" +
                  " --data " + tmp.sub("bench") + "/assays.csv" +
                  " --structures " + tmp.sub("bench") + "/structures" +
                  " --out " + tmp.sub("run")).exit_code == 0);
  write(tmp.sub("gen.json"),
        R"({"seed": 5, "count": 25, "max_subs": 3,
            "region": {"chain_id": "H", "begin_index": 1, "end_index": 10}})");
  REQUIRE(run_cli("generate --config " + tmp.sub("gen.json") + " --checkpoint " +
                  tmp.sub("run") + "/checkpoint_best.bin --structure " +
                  tmp.sub("bench") + "/structures/synth-struct-0.json --out " +
                  tmp.sub("gen")).exit_code == 0);
  write(tmp.sub("screen.json"), R"({"seed": 6, "quantile": 0.3})");
  RunResult screen = run_cli(
      "screen --config " + tmp.sub("screen.json") + " --data " +
      tmp.sub("gen") + "/variants.csv --structure " + tmp.sub("bench") +
      "/structures/synth-struct-0.json --out " + tmp.sub("screen"));
  REQUIRE(screen.exit_code == 0);
  CHECK(fs::exists(tmp.sub("screen") + "/panel.json"));
  CHECK(fs::exists(tmp.sub("screen") + "/score_table.csv"));
}
