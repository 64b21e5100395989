#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() /
                       ("cifrank_cli_" + name + "_" + std::to_string(std::random_device{}()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

struct Result {
  int code = -1;
  std::string err;
};

Result cli(const std::string& args, const fs::path& dir, const std::string& env = {}) {
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = env + (env.empty() ? "" : " ") + "\"" CIFRANK_CLI_PATH "\" " + args +
                          " >/dev/null 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err);
  return r;
}

std::size_t line_count(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("generate writes the requested rows") {
  const auto dir = scratch("gen");
  const auto out = (dir / "d.csv").string();
  CHECK(cli("generate --preset moving --seed 3 --out " + out, dir).code == 0);
  CHECK(line_count(slurp(out)) == 2001);
  CHECK(fs::exists(dir / "d.config.json"));
  fs::remove_all(dir);
}

TEST_CASE("seed falls back to the environment") {
  const auto dir = scratch("env");
  CHECK(cli("generate --preset moving --n 20 --out " + (dir / "a.csv").string(), dir,
            "CIFRANK_SEED=9")
            .code == 0);
  CHECK(cli("generate --preset moving --n 20 --seed 9 --out " + (dir / "b.csv").string(), dir)
            .code == 0);
  CHECK(cli("generate --preset moving --n 20 --out " + (dir / "c.csv").string(), dir,
            "CIFRANK_SEED=10")
            .code == 0);
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  CHECK(slurp(dir / "a.csv") != slurp(dir / "c.csv"));
  CHECK(cli("generate --preset moving --out " + (dir / "d.csv").string(), dir,
            "CIFRANK_SEED=abc")
            .code == 2);
  fs::remove_all(dir);
}

TEST_CASE("exit codes") {
  const auto dir = scratch("codes");
  SUBCASE("unknown preset lists the available ones") {
    const auto r = cli("generate --preset nope --out " + (dir / "x.csv").string(), dir);
    CHECK(r.code == 2);
    CHECK(r.err.find("moving_bm") != std::string::npos);
  }
  SUBCASE("zero sample size") {
    CHECK(cli("generate --preset moving --n 0 --out " + (dir / "x.csv").string(), dir).code == 2);
  }
  SUBCASE("unknown flag and missing subcommand") {
    CHECK(cli("run --bogus", dir).code == 2);
    CHECK(cli("", dir).code == 2);
  }
  SUBCASE("empty variant list") {
    CHECK(cli("ltr --preset moving --variants \"\" --out " + (dir / "o").string(), dir).code ==
          2);
  }
  SUBCASE("malformed CSV") {
    const auto csv = dir / "bad.csv";
    std::ofstream(csv) << "G,R,X,Y\n1,0,0.5,oops\n";
    const auto model = std::string(CIFRANK_SOURCE_DIR) + "/configs/models/m1_non_resolving.json";
    const auto r = cli("run --data " + csv.string() + " --model " + model + " --out " +
                           (dir / "o").string(),
                       dir);
    CHECK(r.code == 3);
    CHECK(r.err.find("row") != std::string::npos);
  }
  SUBCASE("diverging ranker") {
    const auto cfg = dir / "cfg.json";
    std::ofstream(cfg) << R"({"dataset": {"preset": "moving"},
      "ltr": {"learning_rate": 1e308, "variants": ["original"], "split_count": 1,
              "n_train": 200, "n_test": 200, "k": [10]}})";
    CHECK(cli("ltr --config " + cfg.string() + " --out " + (dir / "o").string(), dir).code == 4);
  }
  fs::remove_all(dir);
}

TEST_CASE("run and ltr are byte-identical across invocations") {
  const auto dir = scratch("det");
  for (const char* tag : {"a", "b"}) {
    CHECK(cli("run --preset moving --seed 4 --n 500 --k 20,50 --resolving X=true --out " +
                  (dir / "run" / tag).string(),
              dir)
              .code == 0);
    CHECK(cli("ltr --preset moving --seed 4 --splits 2 --k 50 --out " +
                  (dir / "ltr" / tag).string(),
              dir)
              .code == 0);
  }
  for (const char* kind : {"run", "ltr"}) {
    std::size_t files = 0;
    for (const auto& entry : fs::recursive_directory_iterator(dir / kind / "a")) {
      if (!entry.is_regular_file()) continue;
      const auto rel = fs::relative(entry.path(), dir / kind / "a");
      INFO(rel.string());
      CHECK(slurp(entry.path()) == slurp(dir / kind / "b" / rel));
      ++files;
    }
    CHECK(files > 3);
  }
  fs::remove_all(dir);
}
