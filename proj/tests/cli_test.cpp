#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(MMSETS_CLI) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  std::string out;
  char buf[512];
  while (std::fgets(buf, sizeof buf, pipe)) out += buf;
  const int status = pclose(pipe);
  while (!out.empty() && out.back() == '\n') out.pop_back();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

class CliTest : public ::testing::Test {
 protected:
  static fs::path root() {
    static const fs::path dir = fs::temp_directory_path() / ("mmsets_cli_test_" + std::to_string(getpid()));
    return dir;
  }

  static void TearDownTestSuite() { fs::remove_all(root()); }

  static void SetUpTestSuite() {
    fs::remove_all(root());
    fs::create_directories(root());
    make_dataset("single", 60, 2, "single_label");
    make_dataset("kfold", 327, 2, "single_label");
    make_dataset("multi", 80, 3, "multi_label");
  }

  static void make_dataset(const std::string& name, int n, int classes, const std::string& task) {
    nlohmann::json cfg{{"seed", 3},
                       {"num_samples", n},
                       {"num_classes", classes},
                       {"task", task},
                       {"informative", "sig"},
                       {"modalities",
                        {{{"id", "sig"}, {"kind", "dense"}, {"dim", 4}, {"min_instances", 1}, {"max_instances", 2}},
                         {{"id", "txt"}, {"kind", "index_sequence"}, {"vocab_size", 15}, {"max_instances", 2}, {"missing_rate", 0.3}},
                         {{"id", "aux"}, {"kind", "dense"}, {"dim", 3}, {"max_instances", 3}, {"missing_rate", 0.3}}}}};
    std::ofstream(root() / (name + ".json")) << cfg.dump();
    auto r = run("gen-synthetic --config " + (root() / (name + ".json")).string() + " --out " + (root() / name).string());
    ASSERT_EQ(r.code, 0);
  }

  static std::string data(const std::string& name) { return " --data " + (root() / name).string(); }
  static std::string out(const std::string& name) { return " --out " + (root() / ("runs-" + name)).string(); }
};

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("train").code, 1);
  EXPECT_EQ(run("train" + data("single") + " --pool median").code, 1);
  EXPECT_EQ(run("eval" + data("single") + out("usage")).code, 1);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(CliTest, DataErrorsExitTwo) {
  EXPECT_EQ(run("train --data " + (root() / "nope").string() + out("bad")).code, 2);
  fs::create_directories(root() / "broken");
  fs::copy_file(root() / "single" / "manifest.json", root() / "broken" / "manifest.json", fs::copy_options::overwrite_existing);
  std::ofstream(root() / "broken" / "samples.jsonl") << "{\"id\": \"x\"}\n";
  EXPECT_EQ(run("train" + data("broken") + out("bad")).code, 2);
  EXPECT_EQ(run("train" + data("single") + " --modalities sig,ghost" + out("bad")).code, 2);
}

TEST_F(CliTest, ImportanceWithSumPoolingIsRejected) {
  EXPECT_EQ(run("eval" + data("single") + " --kfold 2 --epochs 1 --pool sum --importance" + out("imp")).code, 2);
  EXPECT_EQ(run("eval" + data("single") + " --kfold 2 --epochs 1 --baseline concat --importance" + out("imp")).code, 2);
}

TEST_F(CliTest, TrainIsBitReproducibleAndFlagOverridesConfig) {
  const std::string args = "train" + data("single") + " --epochs 3 --seed 11" + out("repro");
  auto a = run(args);
  ASSERT_EQ(a.code, 0);
  const std::string first = slurp(fs::path(a.out) / "checkpoint.json");
  fs::remove_all(a.out);
  auto b = run(args);
  ASSERT_EQ(b.code, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(first, slurp(fs::path(b.out) / "checkpoint.json"));

  auto log = slurp(fs::path(b.out) / "train_log.jsonl");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 3);

  std::ofstream(root() / "run.json") << R"({"seed": 99, "epochs": 2})";
  auto c = run("train" + data("single") + " --config " + (root() / "run.json").string() + " --seed 11 --epochs 3" + out("repro"));
  ASSERT_EQ(c.code, 0);
  auto cfg = read_json(fs::path(c.out) / "config.json");
  EXPECT_EQ(cfg["seed"], 11);
  EXPECT_EQ(cfg["epochs"], 3);
  EXPECT_EQ(first, slurp(fs::path(c.out) / "checkpoint.json"));
}

TEST_F(CliTest, SeedFallsBackToEnvironment) {
  auto a = run("train" + data("single") + " --epochs 1" + out("env"));
  auto b = run("train" + data("single") + " --epochs 1" + out("env") + " --seed 5");
  const std::string cmd = "env MMSETS_SEED=5 " + std::string(MMSETS_CLI) + " train" + data("single") + " --epochs 1" + out("env");
  FILE* pipe = popen(cmd.c_str(), "r");
  char buf[512] = {0};
  std::string env_out = std::fgets(buf, sizeof buf, pipe) ? buf : "";
  pclose(pipe);
  while (!env_out.empty() && env_out.back() == '\n') env_out.pop_back();
  ASSERT_EQ(a.code, 0);
  ASSERT_EQ(b.code, 0);
  EXPECT_EQ(read_json(fs::path(env_out) / "config.json")["seed"], 5);
  EXPECT_EQ(slurp(fs::path(env_out) / "checkpoint.json"), slurp(fs::path(b.out) / "checkpoint.json"));
}

TEST_F(CliTest, EveryPoolAndWidthTrains) {
  for (const char* pool : {"sum", "max", "min", "mean"}) {
    auto r = run("train" + data("single") + " --epochs 1 --pool " + pool + out("pools"));
    ASSERT_EQ(r.code, 0) << pool;
    EXPECT_EQ(read_json(fs::path(r.out) / "checkpoint.json")["model"]["pool"], pool);
  }
  for (int dim : {32, 1024}) {
    auto r = run("train" + data("single") + " --epochs 1 --dim " + std::to_string(dim) + out("dims"));
    ASSERT_EQ(r.code, 0) << dim;
    EXPECT_EQ(read_json(fs::path(r.out) / "checkpoint.json")["model"]["dim"], dim);
  }
}

TEST_F(CliTest, KFoldSizesAndReproducibility) {
  const std::string args = "eval" + data("kfold") + " --kfold 5 --epochs 1 --seed 2 --importance" + out("kfold");
  auto a = run(args);
  ASSERT_EQ(a.code, 0);
  const auto report_a = slurp(fs::path(a.out) / "report.json");
  auto report = nlohmann::json::parse(report_a);
  std::vector<int> sizes;
  for (const auto& f : report["folds"]) sizes.push_back(f["samples"]);
  EXPECT_EQ(sizes, (std::vector<int>{66, 66, 65, 65, 65}));

  auto fim = read_json(fs::path(a.out) / "fim.json");
  for (const auto& row : fim["rows"]) {
    double total = 0.0;
    for (double v : row["values"]) total += v;
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
  auto csv = slurp(fs::path(a.out) / "fim.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "model,aux,sig,txt");
  auto imp = slurp(fs::path(a.out) / "importance.jsonl");
  EXPECT_EQ(std::count(imp.begin(), imp.end(), '\n'), 327);

  fs::remove_all(a.out);
  auto b = run(args);
  ASSERT_EQ(b.code, 0);
  EXPECT_EQ(report_a, slurp(fs::path(b.out) / "report.json"));
}

TEST_F(CliTest, EvalCheckpointAndMultiLabelMetrics) {
  auto t = run("train" + data("multi") + " --epochs 2 --pool min" + out("multi"));
  ASSERT_EQ(t.code, 0);
  auto e = run("eval" + data("multi") + " --checkpoint " + (fs::path(t.out) / "checkpoint.json").string() + " --importance" +
               out("multi"));
  ASSERT_EQ(e.code, 0);
  auto report = read_json(fs::path(e.out) / "report.json");
  for (const char* key : {"f1_micro", "f1_macro", "f1_samples"}) {
    ASSERT_TRUE(report["mean"][key].is_number()) << key;
    EXPECT_GE(report["mean"][key].get<double>(), 0.0);
    EXPECT_LE(report["mean"][key].get<double>(), 1.0);
  }
  auto csv = slurp(fs::path(e.out) / "fim.csv");
  EXPECT_NE(csv.find("set-min,"), std::string::npos);
  // Importance on a checkpoint trained with sum pooling is refused.
  auto s = run("train" + data("multi") + " --epochs 1 --pool sum" + out("multi"));
  ASSERT_EQ(s.code, 0);
  EXPECT_EQ(run("eval" + data("multi") + " --checkpoint " + (fs::path(s.out) / "checkpoint.json").string() + " --importance" +
                out("multi"))
                .code,
            2);
}

TEST_F(CliTest, ConcatBaselineRuns) {
  auto r = run("eval" + data("single") + " --kfold 3 --epochs 2 --baseline concat" + out("concat"));
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(read_json(fs::path(r.out) / "report.json")["fim"].is_null());
}

TEST_F(CliTest, GenSyntheticIsDeterministicAndValidates) {
  const auto cfg = (root() / "single.json").string();
  ASSERT_EQ(run("gen-synthetic --config " + cfg + " --out " + (root() / "again").string()).code, 0);
  for (const char* f : {"manifest.json", "samples.jsonl"}) EXPECT_EQ(slurp(root() / "single" / f), slurp(root() / "again" / f));
  auto bad = read_json(root() / "single.json");
  bad["modalities"][1]["missing_rate"] = 2.0;
  std::ofstream(root() / "bad.json") << bad.dump();
  const std::string cmd = std::string(MMSETS_CLI) + " gen-synthetic --config " + (root() / "bad.json").string() + " --out " +
                          (root() / "bad").string() + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  std::string msg;
  char buf[512];
  while (std::fgets(buf, sizeof buf, pipe)) msg += buf;
  EXPECT_EQ(WEXITSTATUS(pclose(pipe)), 2);
  EXPECT_NE(msg.find("modalities[1].missing_rate"), std::string::npos) << msg;
}

}  // namespace
