#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "relaff/config.hpp"

using namespace relaff;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(RELAFF_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("relaff_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const nlohmann::json& doc) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << doc.dump(2);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Cli, InvalidConfigExitsTwoNamingField) {
  const fs::path dir = scratch("bad");
  auto doc = config_to_json(fixtures::tiny_config());
  doc["head"]["C"] = 0;
  const auto r = run("gen --config " + write_config(dir, doc).string() + " --out " + (dir / "c").string());
  EXPECT_EQ(r.code, 2) << r.out;
  EXPECT_NE(r.out.find("head.C"), std::string::npos) << r.out;
  EXPECT_FALSE(fs::exists(dir / "c"));
}

TEST(Cli, UnknownSubcommandFails) { EXPECT_NE(run("frobnicate").code, 0); }

TEST(Cli, GenIsDeterministic) {
  const fs::path dir = scratch("gen");
  const auto cfg = write_config(dir, config_to_json(fixtures::tiny_config()));
  const auto a = run("gen --config " + cfg.string() + " --out " + (dir / "a").string());
  const auto b = run("gen --config " + cfg.string() + " --out " + (dir / "b").string());
  ASSERT_EQ(a.code, 0) << a.out;
  ASSERT_EQ(b.code, 0) << b.out;
  EXPECT_NE(a.out.find("subjects: 3"), std::string::npos) << a.out;
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    ++files;
    EXPECT_EQ(slurp(e.path()), slurp(dir / "b" / e.path().filename())) << e.path();
  }
  EXPECT_EQ(files, 10u);
}

TEST(Cli, TrainEvalRoundTrip) {
  const fs::path dir = scratch("train");
  auto cfg_doc = config_to_json(fixtures::tiny_config());
  cfg_doc["training"]["lambda"] = 2.0;
  const auto cfg = write_config(dir, cfg_doc);
  ASSERT_EQ(run("gen --config " + cfg.string() + " --out " + (dir / "corpus").string()).code, 0);
  const auto t = run("train --config " + cfg.string() + " --corpus " + (dir / "corpus").string() + " --out " +
                     (dir / "run").string());
  ASSERT_EQ(t.code, 0) << t.out;
  EXPECT_NE(t.out.find("lambda = 2"), std::string::npos) << t.out;
  for (const char* f : {"run_record.json", "metrics.csv", "metrics.txt", "weights_fold00.rafw", "weights_fold02.rafw"})
    EXPECT_TRUE(fs::exists(dir / "run" / f)) << f;
  const auto record = nlohmann::json::parse(slurp(dir / "run" / "run_record.json"));
  EXPECT_EQ(record["folds"].size(), 3u);
  EXPECT_DOUBLE_EQ(record["config"]["training"]["lambda"].get<double>(), 2.0);

  const auto e = run("eval --config " + cfg.string() + " --corpus " + (dir / "corpus").string() + " --weights " +
                     (dir / "run" / "weights_fold00.rafw").string() + " --out " + (dir / "eval").string());
  ASSERT_EQ(e.code, 0) << e.out;
  const std::string pred = slurp(dir / "eval" / "predictions.csv");
  EXPECT_EQ(std::count(pred.begin(), pred.end(), '\n'), 10);
}

TEST(Cli, MissingCorpusIsAnError) {
  const fs::path dir = scratch("missing");
  const auto cfg = write_config(dir, config_to_json(fixtures::tiny_config()));
  EXPECT_NE(run("train --config " + cfg.string() + " --corpus " + (dir / "nope").string() + " --out " +
                (dir / "o").string())
                .code,
            0);
}

TEST(Cli, GradcheckNegativeControl) {
  const auto bad = run("gradcheck --inject-fault");
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("fault.square"), std::string::npos);
}
