#include "oracles.hpp"
#include "deskwarp/denoiser.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

const std::string kCli = DESKWARP_CLI;
const std::string kWork = DESKWARP_CLI_WORK;

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::string work(const std::string& name) {
  const std::string d = kWork + "/" + name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

/// Every regular file under `dir` except run.json, keyed by relative path.
std::map<std::string, std::string> tree(const std::string& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path().string());
  return out;
}

}  // namespace

TEST(Cli, ScheduleVizMatchesTableOracle) {
  const std::string d = work("sched");
  ASSERT_EQ(run("schedule viz --tau 0.8 --steps 50 --history 2 --out " + d + "/s.csv --png " + d + "/s.png"), 0);
  std::istringstream csv(slurp(d + "/s.csv"));
  std::string line;
  std::getline(csv, line);
  std::string want = "token,role";
  for (int k = 50; k >= 0; --k) want += ",k" + std::to_string(k);
  EXPECT_EQ(line, want);
  int rows = 0;
  while (std::getline(csv, line)) {
    std::istringstream cells(line);
    std::string token, role, cell;
    std::getline(cells, token, ',');
    std::getline(cells, role, ',');
    const double s0 = role == "history" ? 0.0 : role == "warped" ? 0.8 : 1.0;
    for (int j = 0; j <= 50; ++j) {
      ASSERT_TRUE(std::getline(cells, cell, ','));
      EXPECT_NEAR(std::stod(cell), oracle::schedule_cell(s0, j, 50), 1e-12) << line;
    }
    ++rows;
  }
  EXPECT_GE(rows, 8);
  EXPECT_TRUE(fs::exists(d + "/s.png"));
}

TEST(Cli, GenerateWritesRequestedFrames) {
  const std::string d = work("gen");
  ASSERT_EQ(run("generate --frames 20 --cache-mode none --set session.noise.steps=4 --out " + d), 0);
  int frames = 0;
  for (const auto& e : fs::directory_iterator(d + "/frames")) frames += e.path().extension() == ".png";
  EXPECT_EQ(frames, 20);
  EXPECT_TRUE(fs::exists(d + "/trajectory.json"));
  EXPECT_TRUE(fs::exists(d + "/run.json"));
}

TEST(Cli, TrainZeroStepsSavesInit) {
  const std::string d = work("train0");
  ASSERT_EQ(run("train --steps 0 --seed 5 --out " + d), 0);
  dw::DenoiserState init = dw::init_denoiser(dw::DenoiserConfig{}, 5);
  dw::save_denoiser(d + "/expected.bin", init);
  EXPECT_EQ(slurp(d + "/model.bin"), slurp(d + "/expected.bin"));
}

TEST(Cli, RejectsBadArguments) {
  EXPECT_NE(run("train --no-such-flag --out " + work("bad")), 0);
  EXPECT_NE(run("frobnicate"), 0);
  EXPECT_NE(run("train --set train.stepz=3 --out " + work("bad2")), 0);
  EXPECT_NE(run("generate --frames 3 --out " + work("bad3")), 0);
}

TEST(Cli, RerunsAreBitIdentical) {
  const std::string a = work("det_a"), b = work("det_b");
  for (const auto& d : {a, b}) {
    ASSERT_EQ(run("scene gen --seed 4 --frames 3 --out " + d + "/scene"), 0);
    ASSERT_EQ(run("train --steps 3 --seed 2 --set train.scene_pool=1 --set train.clips_per_scene=1 --out " + d +
                  "/train"),
              0);
    ASSERT_EQ(run("generate --frames 8 --checkpoint " + d + "/train/model.bin --set session.cache.steps=5 " +
                  "--set session.noise.steps=4 --out " + d + "/gen"),
              0);
  }
  const auto ta = tree(a), tb = tree(b);
  ASSERT_EQ(ta.size(), tb.size());
  for (const auto& [name, bytes] : ta) {
    if (fs::path(name).filename() == "run.json") continue;
    ASSERT_TRUE(tb.count(name)) << name;
    EXPECT_EQ(bytes, tb.at(name)) << name;
  }
}
