// Copyright 2026 The vtalign Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "test_support.hpp"
#include "vtalign/dataio.hpp"
#include "vtalign_cli/cli.hpp"

namespace vt = vtalign::testing;
namespace fs = std::filesystem;

namespace {

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "vtalign");
  return vtalign::cli::run(args);
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

// A small synthetic dataset plus mined triplets, shared by the tests below.
class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new vt::TempDir("cli");
    ASSERT_EQ(cli({"synth", "--per-class", "8", "--d-c", "16", "--seed", "4", "--out-dir", path("data")}), 0);
    ASSERT_EQ(cli({"mine", path("data/train.json"), "--tau", "0.2", "--windows", "2", "--seed", "4", "--out",
                   path("triplets.csv")}),
              0);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::string path(const std::string& rel) { return (dir_->path() / rel).string(); }
  static std::vector<std::string> train_args(const std::string& out, const std::string& epochs) {
    return {"train", path("data/train.json"), "--triplets", path("triplets.csv"), "--d-model", "8", "--d-emb", "6",
            "--batch", "16", "--lr", "1e-3", "--epochs", epochs, "--seed", "4", "--no-wall-time", "--out-ckpt", out};
  }

  static vt::TempDir* dir_;
};

vt::TempDir* CliPipeline::dir_ = nullptr;

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(cli({}), 2);
  EXPECT_EQ(cli({"frobnicate"}), 2);
  EXPECT_EQ(cli({"mine"}), 2);
  EXPECT_EQ(cli({"--version"}), 0);
}

TEST(Cli, IngestExitCodes) {
  vt::TempDir dir("ingest");
  ASSERT_EQ(cli({"synth", "--per-class", "3", "--d-c", "8", "--out-dir", (dir / "d").string()}), 0);
  EXPECT_EQ(cli({"ingest", (dir / "d/all.json").string()}), 0);
  EXPECT_EQ(cli({"ingest", (dir / "d/all.json").string(), "--validate-only"}), 0);
  EXPECT_EQ(cli({"ingest", (dir / "missing.json").string()}), 2);

  // Point one segment at a sentence that does not exist.
  auto j = nlohmann::json::parse(vt::read_file(dir / "d/all.json"));
  j["videos"][0]["segments"][0]["sentence_id"] = 999999;
  std::ofstream(dir / "d/dangling.json") << j.dump();
  EXPECT_EQ(cli({"ingest", (dir / "d/dangling.json").string()}), 2);

  EXPECT_EQ(cli({"ingest", (dir / "d/all.json").string(), "--out", (dir / "norm.json").string()}), 0);
  EXPECT_EQ(cli({"ingest", (dir / "norm.json").string()}), 0);
}

TEST(Cli, SynthIsByteIdentical) {
  vt::TempDir dir("synth");
  for (const char* sub : {"a", "b"}) {
    ASSERT_EQ(cli({"synth", "--per-class", "4", "--d-c", "8", "--seed", "11", "--out-dir", (dir / sub).string()}), 0);
  }
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), dir / "a");
    EXPECT_EQ(vt::read_file(e.path()), vt::read_file(dir / "b" / rel.string())) << rel;
    ++files;
  }
  EXPECT_GT(files, 40u);
  EXPECT_EQ(cli({"synth", "--classes", "1", "--out-dir", (dir / "c").string()}), 2);
}

TEST_F(CliPipeline, MineEchoesConfigAndIsDeterministic) {
  ASSERT_EQ(cli({"mine", path("data/train.json"), "--tau", "0.2", "--windows", "2", "--seed", "4", "--threads", "3",
                 "--out", path("again.csv")}),
            0);
  // Only the echoed output path differs.
  const std::string csv = vt::read_file(path("triplets.csv"));
  const std::string again = vt::read_file(path("again.csv"));
  EXPECT_EQ(csv.substr(csv.find('\n')), again.substr(again.find('\n')));
  EXPECT_EQ(csv.rfind("# {", 0), 0u);
  EXPECT_NE(csv.find("\"seed\":4"), std::string::npos);
  const auto rep = nlohmann::json::parse(vt::read_file(path("triplets.csv.report.json")));
  EXPECT_EQ(rep["config"]["seed"], 4);
  EXPECT_EQ(cli({"mine", path("data/train.json"), "--tau", "1.5", "--out", path("bad.csv")}), 2);
}

TEST_F(CliPipeline, OneEpochTraceAndResume) {
  ASSERT_EQ(cli(train_args(path("one.ckpt"), "1")), 0);
  const auto trace = lines_of(vt::read_file(path("one.ckpt.trace.csv")));
  ASSERT_EQ(trace.size(), 3u);  // echo, header, one epoch
  EXPECT_EQ(trace[0].rfind("# {", 0), 0u);
  EXPECT_EQ(trace[2].rfind("1,", 0), 0u);

  auto resume = train_args(path("two.ckpt"), "1");
  resume.insert(resume.end(), {"--resume", path("one.ckpt")});
  EXPECT_EQ(cli(resume), 0);

  // Same checkpoint, different architecture.
  auto mismatch = train_args(path("bad.ckpt"), "1");
  mismatch[6] = "10";  // --d-emb
  mismatch.insert(mismatch.end(), {"--resume", path("one.ckpt")});
  EXPECT_EQ(cli(mismatch), 2);
  EXPECT_FALSE(fs::exists(path("bad.ckpt")));
}

TEST_F(CliPipeline, EvalWritesReportFiles) {
  ASSERT_EQ(cli(train_args(path("eval.ckpt"), "2")), 0);
  ASSERT_EQ(cli({"eval", path("data/eval.json"), "--ckpt", path("eval.ckpt"), "--beta", "0", "--out", path("ev")}), 0);
  const auto rep = nlohmann::json::parse(vt::read_file(path("ev/report.json")));
  EXPECT_EQ(rep["runs"], 1);  // --classes all
  EXPECT_EQ(rep["config"]["fusion"]["beta"], 0.0);
  EXPECT_EQ(lines_of(vt::read_file(path("ev/confusion.csv")))[1].rfind("truth,", 0), 0u);
  EXPECT_TRUE(fs::exists(path("ev/per_class.csv")));

  ASSERT_EQ(cli({"eval", path("data/all.json"), "--ckpt", path("eval.ckpt"), "--classes", "50%", "--runs", "7",
                 "--out", path("ev2")}),
            0);
  const auto rep2 = nlohmann::json::parse(vt::read_file(path("ev2/report.json")));
  EXPECT_EQ(rep2["runs"], 7);
  EXPECT_EQ(rep2["config"]["split"]["k"], 5);

  EXPECT_EQ(cli({"eval", path("data/eval.json"), "--ckpt", path("eval.ckpt"), "--classes", "99", "--out", path("x")}),
            2);
  EXPECT_EQ(cli({"eval", path("data/eval.json"), "--ckpt", path("missing.ckpt"), "--out", path("x")}), 2);
  EXPECT_EQ(cli({"eval", path("data/eval.json"), "--ckpt", path("eval.ckpt"), "--alpha", "0", "--beta", "0",
                 "--out", path("x")}),
            2);
}

TEST_F(CliPipeline, ProjectSeparatesFourClusters) {
  ASSERT_EQ(cli(train_args(path("proj.ckpt"), "3")), 0);
  EXPECT_EQ(cli({"project", path("data/all.json"), "--ckpt", path("proj.ckpt"), "--out", path("empty.csv")}), 2);
  EXPECT_EQ(cli({"project", path("data/all.json"), "--ckpt", path("proj.ckpt"), "--classes", "nope", "--out",
                 path("x.csv")}),
            2);

  const vtalign::DatasetManifest m = vtalign::load_manifest(path("data/all.json"));
  std::string four;
  for (std::size_t i = 0; i < 4; ++i) four += (i ? "," : "") + m.class_prototypes[i].class_name;
  ASSERT_EQ(cli({"project", path("data/all.json"), "--ckpt", path("proj.ckpt"), "--beta", "0", "--classes", four,
                 "--out", path("proj.csv")}),
            0);
  const auto rows = lines_of(vt::read_file(path("proj.csv")));
  ASSERT_EQ(rows[1], "id,label,x,y");
  std::vector<std::pair<double, double>> pts;
  std::vector<std::string> labels;
  std::size_t protos = 0;
  for (std::size_t i = 2; i < rows.size(); ++i) {
    std::istringstream in(rows[i]);
    std::string id, label, x, y;
    std::getline(in, id, ',');
    std::getline(in, label, ',');
    std::getline(in, x, ',');
    std::getline(in, y, ',');
    if (id.rfind("proto:", 0) == 0) {
      ++protos;
      continue;
    }
    pts.emplace_back(std::stod(x), std::stod(y));
    labels.push_back(label);
  }
  EXPECT_EQ(protos, 4u);
  EXPECT_EQ(pts.size(), 32u);
  EXPECT_GT(vt::silhouette(pts, labels), 0.5);
}
