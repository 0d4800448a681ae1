#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "test_util.hpp"
#include "transnet/checkpoint.hpp"
#include "transnet/cli/cli.hpp"
#include "transnet/cli/experiment.hpp"
#include "transnet/data.hpp"
#include "transnet/error.hpp"

namespace transnet::cli {
namespace {

using testutil::read_bytes;
using testutil::TempDir;
using testutil::write_bytes;

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "transnet");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Drops the last CSV column (wall time) from every line.
std::string without_seconds(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

Json without_key(Json j, const char* key) {
  j.erase(key);
  return j;
}

// A fast spec: 3 clips per class, 2 epochs.
void write_small_spec(const std::filesystem::path& path, const std::filesystem::path& out) {
  Json spec = {
      {"model", {{"head_activation", "identity"}}},
      {"data", {{"generate", {{"seed", 1}, {"clips_per_class", 3}}}}},
      {"split", {{"train_fraction", 0.5}, {"seed", 1}}},
      {"seeds", {4}},
      {"epochs", 2},
      {"batch_size", 6},
      {"pretrain",
       {{"segmentation", {{"pairs", 6}, {"epochs", 1}, {"batch_size", 6}}},
        {"classification", {{"per_class", 1}, {"epochs", 1}, {"batch_size", 6}}}}},
      {"out", out.string()}};
  write_bytes(path, spec.dump(2));
}

// ---------------------------------------------------------------------------
// exit codes

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(run({"gen-data", "--kind", "actions", "--bogus", "1", "--out", "x"}).code, kExitUsage);
  EXPECT_EQ(run({"gen-data", "--kind", "videos", "--out", "x"}).code, kExitUsage);
  EXPECT_EQ(run({"gen-data", "--kind", "actions"}).code, kExitUsage);
}

TEST(Cli, HelpExitsZero) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, kExitOk);
  for (const char* cmd : {"gen-data", "pretrain-seg", "pretrain-cls", "train", "eval", "predict",
                          "gradcheck", "inspect-checkpoint", "compare-arms"}) {
    EXPECT_NE(r.out.find(cmd), std::string::npos) << cmd;
  }
  EXPECT_EQ(run({"train", "--help"}).code, kExitOk);
}

TEST(Cli, RuntimeErrorIsOneLine) {
  TempDir dir;
  write_bytes(dir.path() / "junk.tnet", "definitely not a checkpoint");
  const auto r = run({"inspect-checkpoint", (dir.path() / "junk.tnet").string()});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_EQ(r.err.rfind("error: checkpoint_bad_magic: ", 0), 0u) << r.err;
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
}

TEST(Cli, BadSpecIsConfigError) {
  TempDir dir;
  write_bytes(dir.path() / "spec.json", R"({"epochz": 3})");
  const auto r = run({"train", "--spec", (dir.path() / "spec.json").string()});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_EQ(r.err.rfind("error: config: ", 0), 0u) << r.err;
}

// ---------------------------------------------------------------------------
// subcommands

TEST(Cli, GenDataActions) {
  TempDir dir;
  const auto out = dir.path() / "d";
  const auto r = run({"gen-data", "--kind", "actions", "--seed", "1", "--clips-per-class", "10",
                      "--out", out.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto ds = load_clip_dataset(out);
  EXPECT_EQ(ds.items.size(), 60u);
  EXPECT_TRUE(std::filesystem::exists(out / "manifest.json"));
  // reproducible on disk
  ASSERT_EQ(run({"gen-data", "--kind", "actions", "--seed", "1", "--clips-per-class", "10", "--out",
                 (dir.path() / "e").string()})
                .code,
            kExitOk);
  EXPECT_EQ(testutil::tree(out), testutil::tree(dir.path() / "e"));
}

TEST(Cli, GenDataSegmentation) {
  TempDir dir;
  const auto r = run({"gen-data", "--kind", "segmentation", "--count", "7", "--out",
                      (dir.path() / "s").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(load_seg_dataset(dir.path() / "s").items.size(), 7u);
}

TEST(Cli, GradcheckToyPasses) {
  const auto r = run({"gradcheck", "--preset", "toy"});
  EXPECT_EQ(r.code, kExitOk) << r.out;
  EXPECT_NE(r.out.find("max relative error"), std::string::npos);
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
}

TEST(Cli, GradcheckImpossibleToleranceFails) {
  const auto r = run({"gradcheck", "--samples", "20", "--tolerance", "0"});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.out.find("FAIL"), std::string::npos);
}

TEST(Cli, TrainEvalPredictInspect) {
  TempDir dir;
  const auto spec = dir.path() / "spec.json";
  const auto out = dir.path() / "run";
  write_small_spec(spec, out);
  const auto r = run({"train", "--spec", spec.string(), "-q"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const char* f : {"final.tnet", "train_log.csv", "metrics.json", "effective_spec.json"}) {
    EXPECT_TRUE(std::filesystem::exists(out / f)) << f;
  }
  const auto metrics = Json::parse(read_bytes(out / "metrics.json"));
  const double final_acc = metrics["test"]["accuracy"].get<double>();
  EXPECT_EQ(metrics["final_epoch"]["test_acc"].get<double>(), final_acc);

  // standalone eval reproduces the in-run evaluation exactly
  const auto e = run({"eval", "--checkpoint", (out / "final.tnet").string(), "--json"});
  ASSERT_EQ(e.code, kExitOk) << e.err;
  const auto ej = Json::parse(e.out);
  EXPECT_EQ(ej["accuracy"].get<double>(), final_acc);
  EXPECT_EQ(ej["confusion"], metrics["test"]["confusion"]);

  // and so does eval against the same clips on disk
  const auto data = dir.path() / "d";
  ASSERT_EQ(run({"gen-data", "--kind", "actions", "--seed", "1", "--clips-per-class", "3", "--out",
                 data.string()})
                .code,
            kExitOk);
  const auto e2 = run({"eval", "--checkpoint", (out / "final.tnet").string(), "--data", data.string(),
                       "--json"});
  ASSERT_EQ(e2.code, kExitOk) << e2.err;
  EXPECT_EQ(Json::parse(e2.out)["accuracy"].get<double>(), final_acc);
  const auto all = run({"eval", "--checkpoint", (out / "final.tnet").string(), "--split", "all",
                        "--json"});
  EXPECT_EQ(Json::parse(all.out)["total"].get<int>(), 18);

  const auto p = run({"predict", "--checkpoint", (out / "final.tnet").string(), "--split", "test"});
  ASSERT_EQ(p.code, kExitOk) << p.err;
  EXPECT_EQ(p.out.rfind("id,predicted,confidence\n", 0), 0u);
  EXPECT_EQ(std::count(p.out.begin(), p.out.end(), '\n'), 1 + ej["total"].get<int>());

  const auto clip_dir = data / "translate_left" / "translate_left_0000";
  if (std::filesystem::exists(clip_dir)) {
    const auto pc = run({"predict", "--checkpoint", (out / "final.tnet").string(), "--clip",
                         clip_dir.string()});
    EXPECT_EQ(pc.code, kExitOk) << pc.err;
    EXPECT_NE(pc.out.find("translate_left_0000,"), std::string::npos);
  }

  const auto info = run({"inspect-checkpoint", (out / "final.tnet").string()});
  ASSERT_EQ(info.code, kExitOk) << info.err;
  const auto header = read_checkpoint_info(out / "final.tnet").header_text;
  EXPECT_EQ(info.out.rfind(header + "\n", 0), 0u);
  EXPECT_NE(info.out.find("temporal1.weight"), std::string::npos);
}

TEST(Cli, TrainIsReproducible) {
  TempDir dir;
  const auto spec = dir.path() / "spec.json";
  write_small_spec(spec, dir.path() / "unused");
  for (const char* name : {"a", "b"}) {
    const auto r = run({"train", "--spec", spec.string(), "--arm", "classification", "--out",
                        (dir.path() / name).string(), "-q"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
  }
  const auto a = dir.path() / "a";
  const auto b = dir.path() / "b";
  EXPECT_EQ(read_bytes(a / "final.tnet"), read_bytes(b / "final.tnet"));
  EXPECT_EQ(read_bytes(a / "pretrain.tnet"), read_bytes(b / "pretrain.tnet"));
  EXPECT_EQ(without_seconds(read_bytes(a / "train_log.csv")),
            without_seconds(read_bytes(b / "train_log.csv")));
  EXPECT_EQ(without_key(Json::parse(read_bytes(a / "metrics.json")), "seconds"),
            without_key(Json::parse(read_bytes(b / "metrics.json")), "seconds"));
  const auto sa = Json::parse(read_bytes(a / "effective_spec.json"));
  EXPECT_EQ(sa["arms"], Json::array({"classification"}));
}

TEST(Cli, OverridesReachEffectiveSpec) {
  TempDir dir;
  const auto spec = dir.path() / "spec.json";
  write_small_spec(spec, dir.path() / "run");
  const auto r = run({"train", "--spec", spec.string(), "--epochs", "1", "--lr", "0.002", "--seed",
                      "9", "--batch-size", "4", "-q"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto eff = Json::parse(read_bytes(dir.path() / "run" / "effective_spec.json"));
  EXPECT_EQ(eff["epochs"], 1);
  EXPECT_EQ(eff["batch_size"], 4);
  EXPECT_EQ(eff["seeds"], Json::array({9}));
  EXPECT_DOUBLE_EQ(eff["optimizer"]["learning_rate"].get<double>(), 0.002);
}

TEST(Cli, CompareArms) {
  TempDir dir;
  const auto spec = dir.path() / "spec.json";
  const auto out = dir.path() / "cmp";
  write_small_spec(spec, out);
  const auto r = run({"compare-arms", "--spec", spec.string(), "--arms", "none", "segmentation",
                      "classification", "--seeds", "1", "2", "--epochs", "1"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto results = read_bytes(out / "results.csv");
  EXPECT_EQ(results.rfind("arm,seed,test_acc\n", 0), 0u);
  EXPECT_EQ(std::count(results.begin(), results.end(), '\n'), 7);
  const auto summary = read_bytes(out / "summary.csv");
  EXPECT_EQ(std::count(summary.begin(), summary.end(), '\n'), 4);
  EXPECT_TRUE(std::filesystem::exists(out / "segmentation" / "seed_2" / "final.tnet"));
  EXPECT_NE(r.out.find("+-"), std::string::npos);
}

TEST(Cli, PretrainCommands) {
  TempDir dir;
  const auto seg = run({"pretrain-seg", "--pairs", "6", "--heldout", "3", "--epochs", "1", "--out",
                        (dir.path() / "seg").string(), "-q"});
  ASSERT_EQ(seg.code, kExitOk) << seg.err;
  EXPECT_NO_THROW(load_autoencoder(dir.path() / "seg" / "autoencoder.tnet"));
  const auto log = read_bytes(dir.path() / "seg" / "seg_log.csv");
  EXPECT_EQ(log.rfind("epoch,train_loss,train_iou,heldout_iou,seconds\n", 0), 0u);
  const auto cls = run({"pretrain-cls", "--per-class", "1", "--epochs", "1", "--out",
                        (dir.path() / "cls").string(), "-q"});
  ASSERT_EQ(cls.code, kExitOk) << cls.err;
  EXPECT_NO_THROW(load_frame_classifier(dir.path() / "cls" / "frame_classifier.tnet"));

  // a pretrained checkpoint can stand in for the pretraining stage
  const auto spec = dir.path() / "spec.json";
  write_small_spec(spec, dir.path() / "run");
  const auto r = run({"train", "--spec", spec.string(), "--arm", "segmentation", "--seg-checkpoint",
                      (dir.path() / "seg" / "autoencoder.tnet").string(), "--epochs", "1", "-q"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto metrics = Json::parse(read_bytes(dir.path() / "run" / "metrics.json"));
  EXPECT_EQ(metrics["pretrain"]["source"],
            (dir.path() / "seg" / "autoencoder.tnet").generic_string());
}

// ---------------------------------------------------------------------------
// experiment spec and statistics

TEST(ExperimentSpec, RoundtripAndErrors) {
  ExperimentSpec s;
  s.arms = {Arm::kSegmentation, Arm::kNone};
  s.seeds = {3, 5};
  s.epochs = 7;
  s.freeze_encoder = true;
  const auto back = spec_from_json(to_json(s));
  EXPECT_EQ(back.arms, s.arms);
  EXPECT_EQ(back.seeds, s.seeds);
  EXPECT_EQ(back.epochs, 7u);
  EXPECT_TRUE(back.freeze_encoder);
  EXPECT_EQ(to_json(back), to_json(s));

  EXPECT_THROW(spec_from_json(Json::parse(R"({"arms": ["imagenet"]})")), ConfigError);
  EXPECT_THROW(spec_from_json(Json::parse(R"({"data": {"path": "x", "generate": {}}})")), ConfigError);
  ExperimentSpec empty;
  empty.seeds.clear();
  EXPECT_THROW(validate(empty), ConfigError);
  ExperimentSpec missing;
  missing.data.path = "/nonexistent/dir";
  EXPECT_THROW(validate(missing), ConfigError);
}

TEST(ExperimentSpec, ArmNames) {
  for (Arm a : {Arm::kNone, Arm::kClassification, Arm::kSegmentation}) {
    EXPECT_EQ(parse_arm(to_string(a)), a);
  }
}

TEST(Statistics, SampleMeanAndStd) {
  const auto [m, s] = mean_and_stddev({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(m, 2.5);
  EXPECT_NEAR(s, std::sqrt(5.0 / 3.0), 1e-15);
  const auto [m1, s1] = mean_and_stddev({0.7});
  EXPECT_DOUBLE_EQ(m1, 0.7);
  EXPECT_EQ(s1, 0.0);
}

TEST(Statistics, SummarizeGroupsByArm) {
  std::vector<RunResult> runs(4);
  runs[0].arm = Arm::kNone;
  runs[0].final_eval.accuracy = 0.5;
  runs[1].arm = Arm::kSegmentation;
  runs[1].final_eval.accuracy = 0.9;
  runs[2].arm = Arm::kNone;
  runs[2].final_eval.accuracy = 0.7;
  runs[3].arm = Arm::kSegmentation;
  runs[3].final_eval.accuracy = 0.8;
  const auto s = summarize(runs);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].arm, Arm::kNone);
  EXPECT_EQ(s[0].runs, 2u);
  EXPECT_NEAR(s[0].mean, 0.6, 1e-15);
  EXPECT_NEAR(s[0].stddev, std::sqrt(0.02), 1e-15);
  EXPECT_NEAR(s[1].mean, 0.85, 1e-15);
}

}  // namespace
}  // namespace transnet::cli
