#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "cli.hpp"

namespace s2cast::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "s2cast");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("s2cast_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  os << text;
}

// Tiny end-to-end configuration: seconds, not minutes.
json tiny_config(const fs::path& dir) {
  return {{"d_model", 16},   {"levels", 2},       {"p0", 4},        {"l_max", 1},
          {"input_steps", 12}, {"horizon", 6},    {"heads", 2},     {"d_max", 4},
          {"imbalance", 0.1}, {"epochs", 2},      {"patience", 2},  {"batch_size", 8},
          {"lr", 3e-3},       {"seed", 5},        {"train_stride", 8}, {"eval_stride", 6},
          {"stations", (dir / "stations.csv").string()},
          {"series", (dir / "series.bin").string()},
          {"out_dir", (dir / "run").string()}};
}

fs::path synth_tiny(const fs::path& dir) {
  const auto r = invoke({"synth", "--n", "20", "--steps", "400", "--seed", "3", "--out-dir", dir.string()});
  EXPECT_EQ(r.code, kOk) << r.err;
  return dir;
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(invoke({}).code, kUsage);
  EXPECT_EQ(invoke({"synth"}).code, kUsage);  // missing --n
  EXPECT_EQ(invoke({"frobnicate"}).code, kUsage);
  EXPECT_EQ(invoke({"--help"}).code, kOk);
}

TEST(Cli, SynthIsReproducibleByteForByte) {
  const auto a = fresh_dir("synth_a");
  const auto b = fresh_dir("synth_b");
  for (const auto& d : {a, b}) {
    const auto r = invoke({"synth", "--n", "30", "--steps", "200", "--seed", "7", "--out-dir", d.string()});
    ASSERT_EQ(r.code, kOk) << r.err;
  }
  EXPECT_EQ(slurp(a / "stations.csv"), slurp(b / "stations.csv"));
  EXPECT_EQ(slurp(a / "series.bin"), slurp(b / "series.bin"));
  EXPECT_FALSE(slurp(a / "series.bin").empty());
}

TEST(Cli, PartitionWritesOneFilePerLevel) {
  const auto dir = synth_tiny(fresh_dir("partition"));
  const auto out = dir / "parts";
  const auto r = invoke({"partition", "--stations", (dir / "stations.csv").string(), "--p0", "4",
                         "--levels", "2", "--out-dir", out.string()});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto l1 = json::parse(slurp(out / "partition_level1.json"));
  const auto l2 = json::parse(slurp(out / "partition_level2.json"));
  EXPECT_EQ(l1.at("p"), 4);
  EXPECT_EQ(l2.at("p"), 2);
  EXPECT_EQ(l1.at("assignment").size(), 20u);
  EXPECT_NE(r.out.find("preprocessing wall time"), std::string::npos) << r.out;

  const auto bad = invoke({"partition", "--stations", (dir / "stations.csv").string(), "--p0", "6",
                           "--levels", "3", "--out-dir", out.string()});
  EXPECT_EQ(bad.code, kUsage);
}

TEST(Cli, PartitionP0ThirtyTwoTwoLevels) {
  const auto dir = fresh_dir("partition32");
  ASSERT_EQ(invoke({"synth", "--n", "200", "--steps", "100", "--out-dir", dir.string()}).code, kOk);
  const auto r = invoke({"partition", "--stations", (dir / "stations.csv").string(), "--p0", "32",
                         "--levels", "2", "--out-dir", dir.string()});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_EQ(json::parse(slurp(dir / "partition_level1.json")).at("p"), 32);
  EXPECT_EQ(json::parse(slurp(dir / "partition_level2.json")).at("p"), 16);
}

TEST(Cli, TrainEvalPredictExport) {
  const auto dir = synth_tiny(fresh_dir("train"));
  write_file(dir / "run.json", tiny_config(dir).dump(2));
  const auto tr = invoke({"train", "--config", (dir / "run.json").string()});
  ASSERT_EQ(tr.code, kOk) << tr.err;
  ASSERT_TRUE(fs::exists(dir / "run" / "checkpoint.s2c"));
  const auto metrics = json::parse(slurp(dir / "run" / "metrics.json"));
  EXPECT_TRUE(metrics.at("model").at("per_channel").at("var0").contains("mae"));
  EXPECT_TRUE(metrics.at("model").at("per_channel").at("var0").contains("mse"));

  const std::string ckpt = (dir / "run" / "checkpoint.s2c").string();
  const std::string st = (dir / "stations.csv").string();
  const std::string se = (dir / "series.bin").string();
  const auto ev = invoke({"eval", "--checkpoint", ckpt, "--stations", st, "--series", se, "--out",
                          (dir / "eval.json").string()});
  ASSERT_EQ(ev.code, kOk) << ev.err;
  const auto evj = json::parse(slurp(dir / "eval.json"));
  // Evaluating the saved checkpoint reproduces the numbers written by train.
  EXPECT_EQ(evj.at("model").at("mae"), metrics.at("model").at("mae"));
  EXPECT_EQ(evj.at("persistence"), metrics.at("persistence"));

  const auto pr = invoke({"predict", "--checkpoint", ckpt, "--stations", st, "--series", se, "--out",
                          (dir / "pred.csv").string()});
  ASSERT_EQ(pr.code, kOk) << pr.err;
  const std::string csv = slurp(dir / "pred.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "station_id,lead,var0");
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), 1u + 20u * 6u);

  const auto xa = invoke({"export-attn", "--checkpoint", ckpt, "--stations", st, "--series", se,
                          "--out", (dir / "attn.json").string()});
  ASSERT_EQ(xa.code, kOk) << xa.err;
  const auto attn = json::parse(slurp(dir / "attn.json"));
  ASSERT_EQ(attn.at("levels").size(), 2u);
  for (const auto& level : attn.at("levels")) {
    EXPECT_EQ(level.at("parts").size(), level.at("p").get<std::size_t>());
    for (const auto& part : level.at("parts")) {
      for (std::size_t i = 0; i < part.at("stations").size(); ++i) {
        if (part.at("stations")[i].is_null()) continue;
        double total = 0.0;
        for (double w : part.at("intra")[i]) total += w;
        EXPECT_NEAR(total, 1.0, 1e-12);
      }
    }
  }
  // Same checkpoint, same sample: identical export.
  ASSERT_EQ(invoke({"export-attn", "--checkpoint", ckpt, "--stations", st, "--series", se, "--out",
                    (dir / "attn2.json").string()}).code,
            kOk);
  EXPECT_EQ(slurp(dir / "attn.json"), slurp(dir / "attn2.json"));
}

TEST(Cli, UnknownConfigKeyIsUsageError) {
  const auto dir = synth_tiny(fresh_dir("badcfg"));
  auto cfg = tiny_config(dir);
  cfg["learning_rate"] = 0.1;
  write_file(dir / "run.json", cfg.dump());
  EXPECT_EQ(invoke({"train", "--config", (dir / "run.json").string()}).code, kUsage);
}

TEST(Cli, CorruptedSeriesIsDataError) {
  const auto dir = synth_tiny(fresh_dir("corrupt"));
  std::string bytes = slurp(dir / "series.bin");
  bytes.resize(bytes.size() - 3);
  write_file(dir / "series.bin", bytes);
  write_file(dir / "run.json", tiny_config(dir).dump());
  EXPECT_EQ(invoke({"train", "--config", (dir / "run.json").string()}).code, kDataError);
}

TEST(Cli, DivergenceIsNumericalFailure) {
  const auto dir = synth_tiny(fresh_dir("diverge"));
  auto cfg = tiny_config(dir);
  cfg["lr"] = 1e200;
  write_file(dir / "run.json", cfg.dump());
  const auto r = invoke({"train", "--config", (dir / "run.json").string()});
  EXPECT_EQ(r.code, kNumericalError) << r.err;
}

TEST(Cli, ProbeFindsTheCostMinimum) {
  const auto dir = fresh_dir("probe");
  const auto r = invoke({"probe", "--n", "1000", "--out", (dir / "probe.csv").string()});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_NE(r.out.find("analytic argmin P = 100"), std::string::npos) << r.out;
  std::istringstream csv(slurp(dir / "probe.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "P,analytic_cost,measured_entries");
  std::size_t best_p = 0;
  double best = 1e300;
  while (std::getline(csv, line)) {
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    const double cost = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
    if (cost < best) {
      best = cost;
      best_p = std::stoul(line.substr(0, c1));
    }
  }
  EXPECT_EQ(best_p, 100u);
}

TEST(Cli, PreprocessDumpsArtifacts) {
  const auto dir = synth_tiny(fresh_dir("preprocess"));
  write_file(dir / "run.json", tiny_config(dir).dump());
  const auto r = invoke({"preprocess", "--config", (dir / "run.json").string(), "--out-dir",
                         (dir / "pre").string(), "--dump-sh"});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_TRUE(fs::exists(dir / "pre" / "preprocess.json"));
  EXPECT_TRUE(fs::exists(dir / "pre" / "sh_basis.csv"));
}

}  // namespace
}  // namespace s2cast::cli
