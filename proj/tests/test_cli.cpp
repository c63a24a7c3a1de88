// Drives the cln binary end to end.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace fs = std::filesystem;
using testutil::slurp;
using testutil::write;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome invoke(const fs::path& dir, const std::string& args) {
  const fs::path o = dir / "stdout.txt", e = dir / "stderr.txt";
  const std::string cmd = std::string(CLN_BINARY) + " " + args + " > " + o.string() + " 2> " + e.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(o), slurp(e)};
}

std::string four_node_data() {
  const auto p = testutil::four_node_paths();
  return " --data.nodes " + p.nodes + " --data.edges " + p.edges + " --data.labels " + p.labels + " --data.splits " +
         testutil::four_node_splits();
}

std::string quick_train() { return " --model.depth 2 --model.width 4 --train.epochs 5 --seed 3"; }

fs::path synth(const fs::path& dir, std::size_t n = 120) {
  const fs::path data = dir / "data";
  const Outcome r = invoke(dir, "synth --synth.n " + std::to_string(n) + " --out " + data.string());
  EXPECT_EQ(r.code, 0) << r.err;
  return data;
}

std::string data_flags(const fs::path& data) {
  return " --data.nodes " + (data / "nodes.tsv").string() + " --data.edges " + (data / "edges.tsv").string() +
         " --data.labels " + (data / "labels.tsv").string() + " --data.splits " + (data / "splits.tsv").string();
}

}  // namespace

TEST(CliTrain, WritesArtifacts) {
  const auto dir = testutil::scratch_dir();
  const fs::path out = dir / "run";
  const Outcome r = invoke(dir, "train" + four_node_data() + quick_train() + " --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(out / "checkpoint.txt"));
  EXPECT_TRUE(fs::exists(out / "train_log.csv"));
  EXPECT_TRUE(fs::exists(out / "report.txt"));
  EXPECT_TRUE(fs::exists(out / "report.json"));
  EXPECT_NE(r.out.find("micro_f1"), std::string::npos);
  EXPECT_NE(r.out.find("# best_epoch:"), std::string::npos);
}

TEST(CliTrain, SameSeedSameReport) {
  const auto dir = testutil::scratch_dir();
  const fs::path data = synth(dir);
  for (const char* run : {"a", "b"}) {
    ASSERT_EQ(invoke(dir, "train" + data_flags(data) + quick_train() + " --out " + (dir / run).string()).code, 0);
  }
  EXPECT_EQ(slurp(dir / "a" / "report.txt"), slurp(dir / "b" / "report.txt"));
  EXPECT_EQ(slurp(dir / "a" / "checkpoint.txt"), slurp(dir / "b" / "checkpoint.txt"));
  // The log's last column is wall-clock time.
  auto without_time = [](std::string csv) {
    std::string kept;
    std::istringstream in(csv);
    for (std::string line; std::getline(in, line);) kept += line.substr(0, line.rfind(',')) + '\n';
    return kept;
  };
  EXPECT_EQ(without_time(slurp(dir / "a" / "train_log.csv")), without_time(slurp(dir / "b" / "train_log.csv")));
}

TEST(CliEval, MatchesTrainReport) {
  const auto dir = testutil::scratch_dir();
  const fs::path data = synth(dir);
  for (const char* family : {"cln", "hwn_norel", "sl"}) {
    const std::string args =
        data_flags(data) + quick_train() + " --sl.epochs 20 --model.family " + family + " --out " + (dir / family).string();
    ASSERT_EQ(invoke(dir, "train" + args).code, 0) << family;
    const Outcome e = invoke(dir, "eval" + args);
    ASSERT_EQ(e.code, 0) << e.err;
    EXPECT_EQ(slurp(dir / family / "eval_report.txt"), slurp(dir / family / "report.txt")) << family;
  }
}

TEST(CliEval, ColumnMismatchIsConfigError) {
  const auto dir = testutil::scratch_dir();
  const std::string args = four_node_data() + quick_train() + " --out " + (dir / "run").string();
  ASSERT_EQ(invoke(dir, "train" + args).code, 0);
  const Outcome e = invoke(dir, "eval" + args + " --model.column fnn");
  EXPECT_EQ(e.code, 1);
  EXPECT_NE(e.err.find("error"), std::string::npos);
}

TEST(CliEval, FamilyMismatchIsConfigError) {
  const auto dir = testutil::scratch_dir();
  const std::string args = four_node_data() + quick_train() + " --out " + (dir / "run").string();
  ASSERT_EQ(invoke(dir, "train" + args).code, 0);
  EXPECT_EQ(invoke(dir, "eval" + args + " --model.family sl").code, 1);
}

TEST(CliTrain, ExtraEntitiesOutsideSplitAreNotScored) {
  const auto dir = testutil::scratch_dir();
  const auto p = testutil::four_node_paths();
  write(dir / "nodes.tsv", slurp(p.nodes) + "e5\t0.5\t0.5\t0.5\ne6\t1\t2\t3\n");
  write(dir / "labels.tsv", slurp(p.labels) + "e5\tA\ne6\tB\n");
  const Outcome r = invoke(dir, "train --data.nodes " + (dir / "nodes.tsv").string() + " --data.edges " + p.edges +
                             " --data.labels " + (dir / "labels.tsv").string() + " --data.splits " +
                             testutil::four_node_splits() + quick_train() + " --out " + (dir / "run").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(slurp(dir / "run" / "report.txt").find("entities\t1\n"), std::string::npos);
}

TEST(CliGradcheck, PassesAndFlagsCorruption) {
  const auto dir = testutil::scratch_dir();
  const Outcome ok = invoke(dir, "gradcheck");
  EXPECT_EQ(ok.code, 0);
  EXPECT_NE(ok.out.find("PASS: 24 variants"), std::string::npos) << ok.out;
  const Outcome bad = invoke(dir, "gradcheck --gradcheck.corrupt hidden1.W");
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.out.find("hidden1.W\t"), std::string::npos);
  EXPECT_NE(bad.out.find("FAIL\n"), std::string::npos);
  EXPECT_EQ(bad.out.find("hidden0.W\t20\t9.9"), std::string::npos);
}

TEST(CliGradcheck, ToleranceFlagIsHonored) {
  const auto dir = testutil::scratch_dir();
  const Outcome r = invoke(dir, "gradcheck --gradcheck.tolerance 1e-30");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("FAIL: 24 variants, tolerance 1.0e-30"), std::string::npos) << r.out;
}

TEST(CliSynth, FixedSeedIsReproducible) {
  const auto dir = testutil::scratch_dir();
  for (const char* d : {"a", "b"})
    ASSERT_EQ(invoke(dir, "synth --synth.n 300 --seed 11 --out " + (dir / d).string()).code, 0);
  for (const char* f : {"nodes.tsv", "edges.tsv", "labels.tsv", "splits.tsv"})
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  ASSERT_EQ(invoke(dir, "synth --synth.n 300 --seed 12 --out " + (dir / "c").string()).code, 0);
  EXPECT_NE(slurp(dir / "a" / "nodes.tsv"), slurp(dir / "c" / "nodes.tsv"));
}

TEST(CliSynth, OutputLoadsAndTrains) {
  const auto dir = testutil::scratch_dir();
  const fs::path data = synth(dir, 200);
  const Outcome r = invoke(dir, "train" + data_flags(data) + quick_train() + " --out " + (dir / "run").string());
  EXPECT_EQ(r.code, 0) << r.err;
}

TEST(CliGrid, SingleCellAndResume) {
  const auto dir = testutil::scratch_dir();
  const fs::path data = synth(dir);
  const std::string args = "grid" + data_flags(data) +
                           " --train.epochs 3 --grid.depths 1,2 --grid.widths 3 --grid.optimizers adam --out " +
                           (dir / "g").string();
  const Outcome first = invoke(dir, args);
  ASSERT_EQ(first.code, 0) << first.err;
  const std::string table = slurp(dir / "g" / "grid.tsv");
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 3);
  EXPECT_TRUE(fs::exists(dir / "g" / "grid_surface.tsv"));
  EXPECT_TRUE(fs::exists(dir / "g" / "best_checkpoint.txt"));
  EXPECT_EQ(first.out.find("# resumed"), std::string::npos);

  fs::remove_all(dir / "g" / "cells" / "d2_w3_adam");
  const Outcome second = invoke(dir, args);
  ASSERT_EQ(second.code, 0) << second.err;
  EXPECT_NE(second.out.find("# resumed cells: 1\n"), std::string::npos) << second.out;
  EXPECT_EQ(slurp(dir / "g" / "grid.tsv"), table);

  const Outcome one = invoke(dir, "grid" + data_flags(data) +
                               " --train.epochs 2 --grid.depths 1 --grid.widths 2 --grid.optimizers rmsprop --out " +
                               (dir / "one").string());
  ASSERT_EQ(one.code, 0) << one.err;
  const std::string t1 = slurp(dir / "one" / "grid.tsv");
  EXPECT_EQ(std::count(t1.begin(), t1.end(), '\n'), 2);
  EXPECT_NE(t1.find("\tbest\n"), std::string::npos);
}

TEST(CliGrid, AllCellsFailing) {
  const auto dir = testutil::scratch_dir();
  const fs::path data = synth(dir);
  const Outcome r = invoke(dir, "grid" + data_flags(data) + " --train.epochs 2 --grid.depths 1 --grid.widths 0 --out " +
                             (dir / "g").string());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("every cell failed"), std::string::npos) << r.err;
}

TEST(CliConfig, FileSuppliesPaths) {
  const auto dir = testutil::scratch_dir();
  const auto p = testutil::four_node_paths();
  write(dir / "run.cfg", "# four nodes\ndata.nodes = " + p.nodes + "\ndata.edges = " + p.edges + "\ndata.labels = " +
                             p.labels + "\ndata.splits = " + testutil::four_node_splits() +
                             "\nmodel.depth = 1\nmodel.width = 3\ntrain.epochs = 2\nout = " + (dir / "run").string() +
                             "\n");
  const Outcome r = invoke(dir, "train --config " + (dir / "run.cfg").string());
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "run" / "report.txt"));
}

TEST(CliConfig, BadInputsExitOne) {
  const auto dir = testutil::scratch_dir();
  write(dir / "bad.cfg", "model.depth = 2\nmodel.colour = red\n");
  const Outcome unknown = invoke(dir, "train --config " + (dir / "bad.cfg").string());
  EXPECT_EQ(unknown.code, 1);
  EXPECT_NE(unknown.err.find("model.colour"), std::string::npos) << unknown.err;
  EXPECT_EQ(invoke(dir, "train" + four_node_data() + " --train.lr -1").code, 1);
  EXPECT_EQ(invoke(dir, "train --data.nodes " + (dir / "missing.tsv").string()).code, 1);
  EXPECT_EQ(invoke(dir, "train --no-such-flag 1").code, 1);
  EXPECT_EQ(invoke(dir, "").code, 1);
  EXPECT_EQ(invoke(dir, "train --help").code, 0);
}

TEST(PubmedConverter, OutputTrains) {
  if (std::string(CLN_PYTHON).empty() || std::string(CLN_PYTHON).find("NOTFOUND") != std::string::npos) {
    GTEST_SKIP() << "python3 not found";
  }
  const auto dir = testutil::scratch_dir();
  const fs::path data = dir / "pubmed";
  const std::string cmd = std::string(CLN_PYTHON) + " " + CLN_PUBMED_TOOL + " " + CLN_FIXTURES + "/pubmed_mini " +
                          data.string() + " > " + (dir / "convert.txt").string();
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_NE(slurp(dir / "convert.txt").find("citations\t3\n"), std::string::npos);
  const Outcome r = invoke(dir, "train --data.nodes " + (data / "nodes.tsv").string() + " --data.edges " +
                                    (data / "edges.tsv").string() + " --data.labels " + (data / "labels.tsv").string() +
                                    " --model.depth 2 --model.width 4 --train.epochs 2 --out " + (dir / "run").string());
  EXPECT_EQ(r.code, 0) << r.err;
}
