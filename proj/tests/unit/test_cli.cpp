#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "g2k_cli_test";

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Runs the CLI inside the work directory; env is prepended verbatim.
Result run(const std::string& args, const std::string& env = "") {
  fs::create_directories(kWork);
  const auto out = kWork / "stdout.txt";
  const auto err = kWork / "stderr.txt";
  const std::string cmd = "cd '" + kWork.string() + "' && " + env + " '" G2K_CLI_PATH "' " +
                          args + " > '" + out.string() + "' 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string data(const char* name) { return std::string("'") + G2K_TEST_DATA + "/" + name + "'"; }

const std::string kSmall = " --hidden 16 --epochs 2 --obs-len 3 --pred-len 2 --grid-size 2";

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run("").code == 2);
  CHECK(run("frobnicate").code == 2);
  const auto r = run("train --scenario " + data("crossing_pair.cfg") + " --out r0");
  CHECK(r.code == 2);
  CHECK(r.err.find("--variant") != std::string::npos);
  CHECK(r.err.find("--out") != std::string::npos);  // the help text
  CHECK(run("train --variant mc --out r0").code == 2);
  CHECK(run("gradcheck --variant bogus").code == 2);
  CHECK(run("eval").code == 2);
  CHECK(run("train --variant mc --scenario " + data("cv5.cfg") + " --out r0 --set nokey").code ==
        2);
}

TEST_CASE("train writes a checkpoint and a log carrying the config hash") {
  fs::remove_all(kWork / "run1");
  const auto r = run("train --variant mcr_mp --scenario " + data("crossing_pair.cfg") +
                     " --seed 7 --out run1/" + kSmall);
  REQUIRE(r.code == 0);
  CHECK(fs::exists(kWork / "run1" / "ckpt"));
  CHECK(fs::exists(kWork / "run1" / "log"));
  const auto hash = r.out.substr(r.out.find("config ") + 7, 16);
  CHECK(slurp(kWork / "run1" / "log").find("# config_hash " + hash) != std::string::npos);
  CHECK(slurp(kWork / "run1" / "ckpt").find("config_hash " + hash) != std::string::npos);

  SUBCASE("eval reports the checkpoint and rejects a grid mismatch") {
    const auto e = run("eval --ckpt run1/ckpt --scenario " + data("crossing_pair.cfg") +
                       " --csv run1/eval.csv");
    CHECK(e.code == 0);
    CHECK(e.out.find("mcr_mp") != std::string::npos);
    CHECK(slurp(kWork / "run1" / "eval.csv").find(hash) != std::string::npos);
    CHECK(run("eval --ckpt run1/ckpt --grid-size 3 --scenario " + data("crossing_pair.cfg"))
              .code == 4);
  }
  SUBCASE("viz writes stochastic rows, a grid image, and is repeatable") {
    REQUIRE(run("viz --ckpt run1/ckpt --scenario " + data("crossing_pair.cfg") +
                " --batch 0 --out v1")
                .code == 0);
    REQUIRE(run("viz --ckpt run1/ckpt --scenario " + data("crossing_pair.cfg") +
                " --batch 0 --out v2")
                .code == 0);
    for (const char* f : {"adjacency.csv", "grid.pgm", "grid.csv", "cell_attention.csv"})
      CHECK(slurp(kWork / "v1" / f) == slurp(kWork / "v2" / f));
    CHECK(slurp(kWork / "v1" / "grid.pgm").find("\n2 2\n255\n") != std::string::npos);
    CHECK(slurp(kWork / "v1" / "adjacency.csv").find(hash) != std::string::npos);
    CHECK(run("viz --ckpt run1/ckpt --scenario " + data("crossing_pair.cfg") +
              " --batch 999 --out v3")
              .code == 2);
  }
}

TEST_CASE("the same seed gives identical checkpoints; G2K_SEED overrides the file") {
  const std::string base = "train --variant mc --scenario " + data("group_walk.cfg") + kSmall;
  REQUIRE(run(base + " --seed 3 --out a").code == 0);
  REQUIRE(run(base + " --seed 3 --out b").code == 0);
  CHECK(slurp(kWork / "a" / "ckpt") == slurp(kWork / "b" / "ckpt"));

  std::ofstream(kWork / "seed.cfg") << "seed=5\n";
  REQUIRE(run(base + " --config seed.cfg --out c", "G2K_SEED=3").code == 0);
  CHECK(slurp(kWork / "c" / "ckpt") == slurp(kWork / "a" / "ckpt"));
  REQUIRE(run(base + " --config seed.cfg --out d").code == 0);
  CHECK(slurp(kWork / "d" / "ckpt") != slurp(kWork / "a" / "ckpt"));
  // the flag beats the environment
  REQUIRE(run(base + " --seed 3 --out e", "G2K_SEED=9").code == 0);
  CHECK(slurp(kWork / "e" / "ckpt") == slurp(kWork / "a" / "ckpt"));
}

TEST_CASE("baseline needs no checkpoint and is exact on constant velocity tracks") {
  const auto r = run("eval --baseline --scenario " + data("cv5.cfg") + " --csv base.csv");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("const_velocity") != std::string::npos);
  CHECK(slurp(kWork / "base.csv").find("const_velocity,0.000000,0.000000") != std::string::npos);
}

TEST_CASE("gradcheck passes on the desk model") {
  CHECK(run("gradcheck --variant g_lstm").code == 0);
  const auto r = run("gradcheck --variant mcr_mpc");
  CHECK(r.code == 0);
  CHECK(r.out.find("gnn.conv.K") != std::string::npos);
  const auto bad = run("gradcheck --variant mc --tol 0");
  CHECK(bad.code == 5);
  CHECK(bad.err.find("sri.phi_v.W_i") != std::string::npos);
}

TEST_CASE("synth writes a loadable tsv") {
  REQUIRE(run("synth --scenario " + data("cv5.cfg") + " --out cv5.tsv").code == 0);
  const auto text = slurp(kWork / "cv5.tsv");
  CHECK(text.find('\t') != std::string::npos);
  CHECK(run("eval --baseline --data cv5.tsv").code == 0);
  CHECK(run("eval --baseline --data cv5.tsv --scenario " + data("cv5.cfg")).code == 2);
}
