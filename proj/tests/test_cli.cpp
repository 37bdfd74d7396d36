#include "opclab/config.hpp"

#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "opclab_cli_test";

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Outcome {
  int code = -1;
  std::string err;
};

Outcome run(const std::string& args) {
  fs::create_directories(kWork);
  const fs::path err = kWork / "stderr.txt";
  const std::string cmd = std::string("\"") + OPCLAB_CLI + "\" " + args + " 2> \"" + err.string() + "\" > /dev/null";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

std::string config(const std::string& name) { return std::string(OPCLAB_CONFIG_DIR) + "/" + name + ".ini"; }

fs::path write_config(const std::string& name, const std::string& text) {
  fs::create_directories(kWork);
  const fs::path p = kWork / name;
  std::ofstream(p) << text;
  return p;
}

nlohmann::json error_line(const std::string& err) {
  const auto line = err.substr(0, err.find('\n'));
  return nlohmann::json::parse(line);
}

}  // namespace

TEST_CASE("successful runs are reproducible and carry provenance") {
  const fs::path out1 = kWork / "ilc1.csv", out2 = kWork / "ilc2.csv";
  fs::remove(out1);
  fs::remove(out2);
  const auto a = run("ilc_equiv --config \"" + config("ilc_equiv") + "\" --out \"" + out1.string() + "\"");
  const auto b = run("ilc_equiv --config \"" + config("ilc_equiv") + "\" --out \"" + out2.string() + "\"");
  CHECK(a.code == 0);
  CHECK(b.code == 0);
  CHECK(a.err.empty());
  const std::string csv = slurp(out1);
  CHECK(csv == slurp(out2));
  const auto cfg = opclab::ExperimentConfig::load(config("ilc_equiv"));
  CHECK(csv.find("# config_hash=" + cfg.hash() + "\n# seed=" + std::to_string(cfg.seed()) + "\n") !=
        std::string::npos);
  CHECK(csv.rfind("instance,n_s,n_a,T,relative_deviation,perturbations_beaten\n", 0) == 0);
}

TEST_CASE("seed override") {
  const fs::path out = kWork / "seeded.csv", plain = kWork / "plain.csv";
  CHECK(run("ilc_equiv --config \"" + config("ilc_equiv") + "\" --out \"" + out.string() + "\" --seed 42").code == 0);
  CHECK(run("ilc_equiv --config \"" + config("ilc_equiv") + "\" --out \"" + plain.string() + "\"").code == 0);
  auto cfg = opclab::ExperimentConfig::load(config("ilc_equiv"));
  cfg.set("experiment.seed", "42");
  const std::string csv = slurp(out);
  CHECK(csv.find("# config_hash=" + cfg.hash() + "\n# seed=42\n") != std::string::npos);
  CHECK(csv != slurp(plain));
}

TEST_CASE("every shipped config for the fast studies runs") {
  for (const std::string name : {"gradient", "landscape", "mbrl_loop"}) {
    const fs::path out = kWork / (name + ".csv");
    fs::remove(out);
    CHECK(run(name + " --config \"" + config(name) + "\" --out \"" + out.string() + "\"").code == 0);
    CHECK(fs::exists(out));
  }
}

TEST_CASE("configuration errors exit 2 without output") {
  const fs::path out = kWork / "never.csv";
  fs::remove(out);

  const auto typo = write_config("typo.ini", "[experiment]\nseed = 1\n[study]\ninstancse = 3\n");
  auto r = run("ilc_equiv --config \"" + typo.string() + "\" --out \"" + out.string() + "\"");
  CHECK(r.code == 2);
  auto j = error_line(r.err);
  CHECK(j["status"] == "error");
  CHECK(j["kind"] == "config");
  CHECK(j["field"] == "study.instancse");
  CHECK(j["subcommand"] == "ilc_equiv");
  CHECK_FALSE(fs::exists(out));

  const auto no_seed = write_config("noseed.ini", "[study]\ninstances = 3\n");
  r = run("ilc_equiv --config \"" + no_seed.string() + "\" --out \"" + out.string() + "\"");
  CHECK(r.code == 2);
  CHECK(error_line(r.err)["field"] == "experiment.seed");

  r = run("gradient --config \"" + config("ilc_equiv") + "\" --out \"" + out.string() + "\"");
  CHECK(r.code == 2);
  CHECK(error_line(r.err)["field"] == "experiment.subcommand");

  r = run("ilc_equiv --config /nonexistent.ini --out \"" + out.string() + "\"");
  CHECK(r.code == 2);
  CHECK(error_line(r.err)["kind"] == "config");

  r = run("ilc_equiv --out \"" + out.string() + "\"");
  CHECK(r.code == 2);
  CHECK(error_line(r.err)["kind"] == "usage");

  r = run("no_such_study --config x --out y");
  CHECK(r.code == 2);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("runtime errors exit 1") {
  const fs::path out = kWork / "missing_dir" / "out.csv";
  const auto r = run("ilc_equiv --config \"" + config("ilc_equiv") + "\" --out \"" + out.string() + "\"");
  CHECK(r.code == 1);
  const auto j = error_line(r.err);
  CHECK(j["kind"] == "runtime");
  CHECK_FALSE(fs::exists(kWork / "missing_dir"));
}
