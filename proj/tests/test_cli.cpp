#include "mivi/experiments.hpp"
#include "mivi/io.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

using namespace mivi;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mivi_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Runs the CLI, returns its exit code and leaves stderr in `err`.
int run_cli(const std::string& args, std::string* err = nullptr) {
  const fs::path log = fs::temp_directory_path() / "mivi_cli_test_stderr.txt";
  const std::string cmd = std::string(MIVI_CLI_PATH) + " " + args + " 2> " + log.string() + " > /dev/null";
  const int status = std::system(cmd.c_str());
  if (err) *err = slurp(log);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const fs::path& dir, const nlohmann::json& j) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

}  // namespace

TEST(Cli, MissingConfigExitsTwo) {
  EXPECT_EQ(run_cli("run /nonexistent/config.json"), 2);
}

TEST(Cli, InvalidJsonExitsTwo) {
  const fs::path dir = scratch("badjson");
  std::ofstream(dir / "config.json") << "{ not json";
  EXPECT_EQ(run_cli("run " + (dir / "config.json").string()), 2);
}

TEST(Cli, UnknownKeyNamed) {
  const fs::path dir = scratch("unknown");
  const fs::path cfg = write_config(dir, {{"experiment", "toy2d"}, {"trainer.Jx", 3}});
  std::string err;
  EXPECT_EQ(run_cli("run " + cfg.string(), &err), 2);
  EXPECT_NE(err.find("trainer.Jx"), std::string::npos) << err;
}

TEST(Cli, BadValueNamed) {
  const fs::path dir = scratch("badvalue");
  const fs::path cfg = write_config(dir, {{"experiment", "toy2d"}, {"trainer.T", 0}, {"output_dir", "out"}});
  std::string err;
  EXPECT_EQ(run_cli("run " + cfg.string(), &err), 2);
  EXPECT_NE(err.find("trainer.T"), std::string::npos) << err;
}

TEST(Cli, MissingDataFileNamed) {
  const fs::path dir = scratch("missingdata");
  const fs::path cfg = write_config(dir, {{"experiment", "nb"}, {"data.path", "nope.csv"}});
  std::string err;
  EXPECT_EQ(run_cli("run " + cfg.string(), &err), 2);
  EXPECT_NE(err.find("data.path"), std::string::npos) << err;
}

TEST(Cli, UnknownExperimentExitsTwo) {
  const fs::path dir = scratch("unknownexp");
  const fs::path cfg = write_config(dir, {{"experiment", "vae"}});
  EXPECT_EQ(run_cli("run " + cfg.string()), 2);
}

TEST(Cli, DivergenceExitsThree) {
  const fs::path dir = scratch("diverge");
  const fs::path cfg = write_config(dir, {{"experiment", "nb"},
                                          {"output_dir", "out"},
                                          {"trainer.J", 20},
                                          {"trainer.epochs", 20},
                                          {"q.init_mean", {0.0, 0.0}},
                                          {"q.init_log_var", 0.0},
                                          {"sgld.log_step", 4.0}});
  EXPECT_EQ(run_cli("run " + cfg.string()), 3);
  EXPECT_TRUE(fs::exists(dir / "out" / "train_log.csv"));
}

TEST(Cli, GenNbMatchesMoments) {
  const fs::path dir = scratch("gen_nb");
  ASSERT_EQ(run_cli("gen nb --seed 3 --out " + (dir / "a.csv").string()), 0);
  const std::vector<int> counts = read_counts((dir / "a.csv").string());
  ASSERT_EQ(counts.size(), 1000u);
  double mean = 0.0;
  for (int x : counts) {
    EXPECT_GE(x, 0);
    mean += x / 1000.0;
  }
  // Mean r p / (1 - p) = 14/3 for r = 2, p = 0.7.
  EXPECT_NEAR(mean, 14.0 / 3.0, 0.1 * 14.0 / 3.0);
  ASSERT_EQ(run_cli("gen nb --seed 3 --out " + (dir / "b.csv").string()), 0);
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
}

TEST(Cli, GenLogisticCorrelation) {
  const fs::path dir = scratch("gen_logistic");
  ASSERT_EQ(run_cli("gen logistic --seed 5 --out " + (dir / "a.csv").string()), 0);
  const LogisticData d = read_logistic_data((dir / "a.csv").string());
  ASSERT_EQ(d.x.rows(), 1000);
  const Mat c = d.x.rowwise() - d.x.colwise().mean();
  const Mat cov = c.transpose() * c;
  EXPECT_NEAR(cov(0, 1) / std::sqrt(cov(0, 0) * cov(1, 1)), -0.8, 0.05);
  EXPECT_NEAR(cov(2, 3) / std::sqrt(cov(2, 2) * cov(3, 3)), 0.9, 0.05);
  ASSERT_EQ(run_cli("gen logistic --seed 5 --out " + (dir / "b.csv").string()), 0);
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
}

TEST(Cli, GenUnknownExperimentExitsTwo) {
  const fs::path dir = scratch("gen_bad");
  EXPECT_EQ(run_cli("gen toy2d --seed 1 --out " + (dir / "a.csv").string()), 2);
}

TEST(Cli, ToyRunWritesArtifactsDeterministically) {
  const fs::path dir = scratch("toy");
  const nlohmann::json cfg = {{"experiment", "toy2d"},     {"model.variant", "banana"}, {"trainer.J", 20},
                              {"trainer.epochs", 15},      {"trainer.M", 5},            {"samples.count", 200},
                              {"trainer.checkpoint_every", 5}};
  const fs::path path = write_config(dir, cfg);
  ASSERT_EQ(run_cli("run " + path.string() + " --out " + (dir / "a").string()), 0);
  ASSERT_EQ(run_cli("run " + path.string() + " --out " + (dir / "b").string()), 0);
  for (const char* f : {"train_log.csv", "samples_q.csv", "samples_qtilde.csv", "summary.json", "metrics.json",
                        "checkpoint.json"}) {
    ASSERT_TRUE(fs::exists(dir / "a" / f)) << f;
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  }
  const CsvTable log = read_csv((dir / "a" / "train_log.csv").string());
  EXPECT_EQ(log.rows.rows(), 15);
  EXPECT_EQ(read_csv((dir / "a" / "samples_qtilde.csv").string()).rows.rows(), 200);
  const auto summary = nlohmann::json::parse(slurp(dir / "a" / "summary.json"));
  EXPECT_TRUE(summary["variables"].contains("z1"));
  EXPECT_EQ(summary["correlation"].size(), 2u);
  const auto checkpoint = nlohmann::json::parse(slurp(dir / "a" / "checkpoint.json"));
  EXPECT_EQ(checkpoint["snapshots"].size(), 3u);
  EXPECT_EQ(checkpoint["config"], cfg);
}

TEST(Cli, GradcheckRun) {
  const fs::path dir = scratch("gradcheck");
  const fs::path cfg = write_config(dir, {{"experiment", "gradcheck"}, {"gradcheck.configs", 2}, {"output_dir", "out"}});
  ASSERT_EQ(run_cli("run " + cfg.string()), 0);
  const auto m = nlohmann::json::parse(slurp(dir / "out" / "metrics.json"));
  EXPECT_TRUE(m["passed"].get<bool>());
  for (const auto& [k, v] : m["max_rel_error"].items()) EXPECT_LE(v.get<double>(), 1e-4) << k;
}

TEST(Config, TypedAccessorsAndErrors) {
  const Config c = Config::from_json({{"experiment", "nb"}, {"trainer.J", 5}, {"trainer.lr", 0.01},
                                      {"kernel.hidden", {4, 5}}, {"flag", true}, {"data.path", "x.csv"}},
                                     "/base");
  EXPECT_EQ(c.integer("trainer.J", 1), 5);
  EXPECT_EQ(c.integer("trainer.T", 7), 7);
  EXPECT_DOUBLE_EQ(c.number("trainer.lr", 1), 0.01);
  EXPECT_EQ(c.int_list("kernel.hidden", {}), (std::vector<int>{4, 5}));
  EXPECT_TRUE(c.boolean("flag", false));
  EXPECT_EQ(c.path("data.path", ""), "/base/x.csv");
  try {
    c.integer("trainer.lr", 1);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "trainer.lr");
  }
  EXPECT_THROW(Config::from_json({{"trainer", {{"J", 3}}}}), ConfigError);
  EXPECT_THROW(Config::from_json(nlohmann::json::array()), ConfigError);
}
