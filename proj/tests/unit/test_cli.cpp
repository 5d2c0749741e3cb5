#include <gtest/gtest.h>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "mncd/checkpoint.hpp"
#include "mncd/commands.hpp"
#include "mncd/config.hpp"
#include "mncd/image_io.hpp"
#include "mncd/registry.hpp"
#include "test_util.hpp"

using namespace mncd;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string tiny_config(const fs::path& dir) {
  json j = {
      {"model_id", "minenetcd-resnet-tiny"},
      {"dataset_id", "synthetic"},
      {"dataset_root", (dir / "data").string()},
      {"encoder", {{"base_channels", 8}, {"blocks", {1, 1, 1, 1}}}},
      {"decoder", {{"fpn_channels", 16}, {"ppm_scales", {1, 2}}}},
      {"synthetic", {{"num_pairs", 6}, {"size", 64}}},
      {"train", {{"batch_size", 2}, {"total_steps", 2}, {"lr_max", 1e-3}}},
      {"output_dir", (dir / "run").string()},
  };
  return j.dump(2);
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MNCD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

template <typename F>
int exit_code_of(F&& f) {
  try {
    f();
  } catch (...) {
    return exit_code_for_current_exception();
  }
  return kExitOk;
}

}  // namespace

// ---- configuration ---------------------------------------------------------

TEST(Config, MinimalConfigGetsDefaults) {
  const auto c = parse_config(R"({"model_id": "minenetcd-resnet-tiny", "dataset_root": "data/x"})");
  EXPECT_EQ(c.train.seed, 8888u);
  EXPECT_EQ(c.train.lr_max, 1e-4);
  EXPECT_EQ(c.train.lr_min, 1e-7);
  EXPECT_EQ(c.train.beta1, 0.9);
  EXPECT_EQ(c.train.beta2, 0.99);
  EXPECT_TRUE(c.model.use_changefft);
  EXPECT_EQ(c.dataset_id, "folder");
  EXPECT_EQ(c.output_dir, "runs/minenetcd-resnet-tiny");
  EXPECT_EQ(c.split_ratios, (std::array<double, 3>{0.6, 0.1, 0.3}));
}

TEST(Config, UnknownKeyIsNamed) {
  try {
    parse_config(R"({"model_id": "minenetcd-resnet-tiny", "dataset_id": "synthetic",
                     "train": {"lr_maxx": 0.1}})");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("lr_maxx"), std::string::npos) << e.what();
  }
}

TEST(Config, TypeMismatchNamesTheFieldPath) {
  try {
    parse_config(R"({"model_id": "minenetcd-resnet-tiny", "dataset_id": "synthetic",
                     "train": {"batch_size": "large"}})");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.batch_size"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_config("[1, 2]"), ConfigError);
  EXPECT_THROW(parse_config("{not json"), ConfigError);
  EXPECT_THROW(parse_config(R"({"dataset_id": "synthetic"})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"model_id": "minenetcd-resnet-tiny"})"), ConfigError);
}

TEST(Config, SerializationIsAFixedPoint) {
  test::TempDir dir("cfg");
  const auto a = parse_config(tiny_config(dir.path()));
  const std::string once = a.to_json();
  const auto b = parse_config(once);
  EXPECT_EQ(b.to_json(), once);
  EXPECT_EQ(b.model.decoder.ppm_scales, (std::vector<int>{1, 2}));
  EXPECT_EQ(b.synthetic.num_pairs, 6);
  EXPECT_EQ(b.train.total_steps, 2);
}

TEST(Config, OverridesApplyBeforeValidation) {
  test::TempDir dir("ovr");
  const auto c = parse_config(tiny_config(dir.path()),
                              {"train.seed=7", "use_changefft=false", "output_dir=elsewhere",
                               "encoder.blocks=[2,1,1,1]"});
  EXPECT_EQ(c.train.seed, 7u);
  EXPECT_FALSE(c.model.use_changefft);
  EXPECT_EQ(c.output_dir, "elsewhere");
  EXPECT_EQ(c.model.encoder.blocks, (std::array<int, 4>{2, 1, 1, 1}));
  EXPECT_EQ(c.synthetic_options().seed, 7u);
  EXPECT_THROW(parse_config(tiny_config(dir.path()), {"train.lr_maxx=1"}), ConfigError);
  EXPECT_THROW(parse_config(tiny_config(dir.path()), {"no_equals_sign"}), ConfigError);
  EXPECT_THROW(parse_config(tiny_config(dir.path()), {"train.total_steps=0"}), ConfigError);
}

TEST(Config, LoadFromFile) {
  test::TempDir dir("file");
  const fs::path path = dir.path() / "c.json";
  std::ofstream(path) << tiny_config(dir.path());
  EXPECT_EQ(load_config(path).train.batch_size, 2);
  EXPECT_THROW(load_config(dir.path() / "missing.json"), ConfigError);
}

// ---- registries ------------------------------------------------------------

TEST(Registry, KnownIds) {
  EXPECT_TRUE(model_registry().contains("minenetcd-resnet-tiny"));
  EXPECT_TRUE(model_registry().contains("minenetcd-resnet18"));
  EXPECT_TRUE(dataset_registry().contains("synthetic"));
  EXPECT_TRUE(dataset_registry().contains("folder"));
}

TEST(Registry, UnknownIdListsEveryRegisteredId) {
  try {
    model_registry().resolve("no-such-model");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    for (const auto& id : model_registry().ids()) {
      EXPECT_NE(std::string(e.what()).find(id), std::string::npos) << id;
    }
  }
  try {
    dataset_registry().resolve("imagenet");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    for (const auto& id : dataset_registry().ids()) {
      EXPECT_NE(std::string(e.what()).find(id), std::string::npos) << id;
    }
  }
  EXPECT_THROW(parse_config(R"({"model_id": "no-such-model", "dataset_id": "synthetic"})"), ConfigError);
}

TEST(Registry, BuildersHonourTheConfig) {
  test::TempDir dir("reg");
  auto c = parse_config(tiny_config(dir.path()));
  const auto model = build_model(c);
  ChangeDetector direct(c.model, c.train.seed);
  EXPECT_EQ(model->parameter_count(), direct.parameter_count());
  EXPECT_EQ(model->parameters().front().value.to_vector(), direct.parameters().front().value.to_vector());

  const auto r18 = parse_config(R"({"model_id": "minenetcd-resnet18", "dataset_id": "synthetic"})");
  EXPECT_EQ(r18.model.encoder.blocks, (std::array<int, 4>{2, 2, 2, 2}));
  c.model_id = "minenetcd-resnet18";
  EXPECT_THROW(build_model(c), ConfigError);
}

TEST(Registry, SyntheticDatasetMaterializesOnce) {
  test::TempDir dir("ds");
  const auto c = parse_config(tiny_config(dir.path()));
  const Dataset first = open_dataset(c);
  EXPECT_TRUE(fs::exists(dir.path() / "data" / "manifest.json"));
  const auto stamp = fs::last_write_time(dir.path() / "data" / "manifest.json");
  const Dataset second = open_dataset(c);
  EXPECT_EQ(fs::last_write_time(dir.path() / "data" / "manifest.json"), stamp);
  EXPECT_EQ(first.manifest().site_split, second.manifest().site_split);

  auto folder = c;
  folder.dataset_id = "folder";
  folder.dataset_root = (dir.path() / "nothing").string();
  EXPECT_THROW(open_dataset(folder), DataError);
}

// ---- commands --------------------------------------------------------------

TEST(Commands, ExitCodesAreDistinct) {
  EXPECT_EQ(exit_code_of([] { throw ConfigError("x"); }), kExitConfig);
  EXPECT_EQ(exit_code_of([] { throw MissingFileError("x"); }), kExitData);
  EXPECT_EQ(exit_code_of([] { throw NumericError("x"); }), kExitNumeric);
  EXPECT_EQ(exit_code_of([] { throw CheckpointTruncatedError("x"); }), kExitCheckpoint);
  EXPECT_EQ(exit_code_of([] { throw std::runtime_error("x"); }), kExitFailure);
}

TEST(Commands, TrainEvalPredictRender) {
  test::TempDir dir("cmd");
  const auto c = parse_config(tiny_config(dir.path()));
  std::ostringstream out;
  ASSERT_EQ(run_train(c, {}, out), kExitOk);
  const fs::path run = dir.path() / "run";
  EXPECT_TRUE(fs::exists(run / "checkpoint.bin"));
  EXPECT_EQ(parse_config(read_bytes(run / "config.json")).to_json(), c.to_json());

  std::istringstream log(read_bytes(run / "train_log.jsonl"));
  std::string line;
  int steps = 0;
  while (std::getline(log, line)) {
    const auto j = json::parse(line);
    EXPECT_EQ(j.at("step"), steps++);
    EXPECT_TRUE(j.contains("lr") && j.contains("loss"));
  }
  EXPECT_EQ(steps, 2);
  EXPECT_EQ(checkpoint_load(run / "checkpoint.bin").step, 2);

  std::ostringstream report;
  ASSERT_EQ(run_eval(c, {}, report), kExitOk);
  const auto j = json::parse(report.str());
  EXPECT_EQ(j.size(), 5u);
  EXPECT_EQ(json::parse(read_bytes(run / "metrics_test.json")), j);

  CommandOptions val;
  val.split = "val";
  ASSERT_EQ(run_predict(c, val, out), kExitOk);
  ASSERT_EQ(run_render(c, {}, out), kExitOk);
  const Dataset data(dir.path() / "data");
  for (const auto& ref : data.manifest().split(Split::val)) {
    const Image8 img = read_png(run / "predictions" / ref.site_id / (ref.patch_id + ".png"));
    EXPECT_EQ(img.channels, 1);
    for (auto v : img.pixels) EXPECT_TRUE(v == 0 || v == 255);
  }
  for (const auto& ref : data.manifest().split(Split::test)) {
    const Image8 img = read_png(run / "renders" / ref.site_id / (ref.patch_id + ".png"));
    EXPECT_EQ(img.channels, 3);
    EXPECT_EQ(img.height, 64);
  }
}

TEST(Commands, ResumeContinuesTheStepCounter) {
  test::TempDir dir("resume");
  auto c = parse_config(tiny_config(dir.path()));
  std::ostringstream out;
  ASSERT_EQ(run_train(c, {}, out), kExitOk);
  const fs::path first = dir.path() / "run" / "checkpoint.bin";
  auto longer = parse_config(tiny_config(dir.path()), {"train.total_steps=3", "output_dir=" + json((dir.path() / "run2").string()).dump()});
  CommandOptions opts;
  opts.checkpoint = first;
  ASSERT_EQ(run_train(longer, opts, out), kExitOk);
  EXPECT_EQ(checkpoint_load(dir.path() / "run2" / "checkpoint.bin").step, 3);
  EXPECT_EQ(json::parse(read_bytes(dir.path() / "run2" / "train_log.jsonl")).at("step"), 2);
}

TEST(Commands, MissingCheckpointIsCheckpointError) {
  test::TempDir dir("nock");
  const auto c = parse_config(tiny_config(dir.path()));
  std::ostringstream out;
  EXPECT_THROW(run_eval(c, {}, out), CheckpointError);
}

// ---- binary ----------------------------------------------------------------

TEST(CliBinary, ExitStatuses) {
  test::TempDir dir("bin");
  const fs::path cfg = dir.path() / "c.json";
  std::ofstream(cfg) << tiny_config(dir.path());
  const std::string config = "--config " + cfg.string();
  EXPECT_EQ(run_cli("eval " + config), kExitCheckpoint);
  EXPECT_EQ(run_cli("train " + config + " --override train.lr_maxx=1"), kExitConfig);
  EXPECT_EQ(run_cli("train --config " + (dir.path() / "absent.json").string()), kExitConfig);
  EXPECT_EQ(run_cli("frobnicate"), kExitConfig);
  EXPECT_EQ(run_cli("train " + config + " --override dataset_id=\\\"folder\\\" --override dataset_root=/nonexistent"),
            kExitData);
  EXPECT_EQ(run_cli("train " + config + " --seed 3"), kExitOk);
  EXPECT_EQ(json::parse(read_bytes(dir.path() / "run" / "config.json")).at("train").at("seed"), 3);
}

TEST(CliBinary, TrainingIsByteReproducible) {
  test::TempDir dir("repro");
  const fs::path cfg = dir.path() / "c.json";
  std::ofstream(cfg) << tiny_config(dir.path());
  const std::string cmd = "train --config " + cfg.string();
  const fs::path run = dir.path() / "run";
  ASSERT_EQ(run_cli(cmd), 0);
  const std::string ck = read_bytes(run / "checkpoint.bin"), log = read_bytes(run / "train_log.jsonl");
  fs::remove_all(run);
  ASSERT_EQ(run_cli(cmd), 0);
  EXPECT_TRUE(read_bytes(run / "checkpoint.bin") == ck);
  EXPECT_TRUE(read_bytes(run / "train_log.jsonl") == log);
}

TEST(CliBinary, GradcheckCatchesACorruptedAdjoint) {
  EXPECT_EQ(run_cli("gradcheck --inject-adjoint-fault conv2d"), kExitGradcheck);
}
