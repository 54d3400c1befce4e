#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "rcnet/config.hpp"

namespace rcnet {
namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

TEST(Config, DefaultsMatchTheFullScaleProtocol) {
  const RunConfig c = parse_config("");
  EXPECT_EQ(c.net, NetConfig::rcnet_default());
  EXPECT_EQ(c.optim, SGDHyper{});
  EXPECT_EQ(c.task, Task::denoise);
  EXPECT_EQ(c.sampling.patch_size, 41u);
  EXPECT_EQ(c.sampling.stride, 14u);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, ParsesSectionsCommentsAndWhitespace) {
  const RunConfig c = parse_config(
      "# desk preset\n"
      "task = sr_blind\n"
      "  optim.lr0=0.05   # inline comment\n"
      "model.use_bn = false\n"
      "model.kind = win\n"
      "data.scales = 2, 3,4\n"
      "stability.variants = rcnet,blocks=3\n"
      "precision = double\n"
      "\n");
  EXPECT_EQ(c.task, Task::sr_blind);
  EXPECT_DOUBLE_EQ(c.optim.lr0, 0.05);
  EXPECT_FALSE(c.net.use_bn);
  EXPECT_EQ(c.net.kind, NetKind::win);
  EXPECT_EQ(c.scales, (std::vector<int>{2, 3, 4}));
  EXPECT_EQ(c.stability_variants, (std::vector<std::string>{"rcnet", "blocks=3"}));
  EXPECT_EQ(c.precision, Precision::double_);
  EXPECT_EQ(c.corruption().kind, CorruptionSpec::Kind::sr_blind);
}

TEST(Config, RoundTripIsAFixedPoint) {
  RunConfig c;
  c.task = Task::sr;
  c.seed = 12345678901234ULL;
  c.optim.lr0 = 0.1;
  c.optim.weight_decay = 1e-4;
  c.sigma = 17.3;
  c.net.desk_scale = true;
  c.net.k_dense = 5;
  c.train_source = "data/train.txt";
  c.stability_variants = {"rcnet", "win"};
  const std::string text = serialize_config(c);
  const RunConfig back = parse_config(text);
  EXPECT_EQ(serialize_config(back), text);
  EXPECT_EQ(back, c);
  EXPECT_EQ(back.optim.lr0, 0.1);
  EXPECT_EQ(back.optim.weight_decay, 1e-4);
  EXPECT_EQ(back.sigma, 17.3);
  EXPECT_EQ(back.seed, 12345678901234ULL);
}

TEST(Config, ErrorsNameLineAndField) {
  EXPECT_NE(error_of("seed = 1\noptim.lr0 = fast\n").find("line 2"), std::string::npos);
  EXPECT_NE(error_of("seed = 1\noptim.lr0 = fast\n").find("optim.lr0"), std::string::npos);
  EXPECT_NE(error_of("\n\nbogus.key = 1\n").find("line 3"), std::string::npos);
  EXPECT_NE(error_of("\n\nbogus.key = 1\n").find("bogus.key"), std::string::npos);
  EXPECT_NE(error_of("just words\n").find("line 1"), std::string::npos);
  EXPECT_NE(error_of("seed = 1\nseed = 2\n").find("already set"), std::string::npos);
  EXPECT_NE(error_of("model.use_bn = maybe\n").find("model.use_bn"), std::string::npos);
  EXPECT_NE(error_of("model.n_dense = -4\n").find("model.n_dense"), std::string::npos);
  EXPECT_NE(error_of("task = deblur\n").find("task"), std::string::npos);
}

TEST(Config, CrossFieldValidation) {
  RunConfig c;
  c.task = Task::sr;
  c.scales = {2, 3};
  EXPECT_THROW(c.validate(), ConfigError);
  c.scales = {5};
  EXPECT_THROW(c.validate(), ConfigError);
  c.scales = {3};
  EXPECT_NO_THROW(c.validate());
  c.sampling.patch_size = 5;
  EXPECT_THROW(c.validate(), ConfigError);

  RunConfig d;
  d.sigma = 0.0;
  EXPECT_THROW(d.validate(), ConfigError);
  RunConfig e;
  e.optim.momentum = 1.5;
  EXPECT_THROW(e.validate(), ConfigError);
  RunConfig f;
  f.stability_window = 1;
  EXPECT_THROW(f.validate(), ConfigError);
}

TEST(Config, OverridesAndPathResolution) {
  RunConfig c;
  set_config_value(c, "optim.max_iters", "17");
  EXPECT_EQ(c.optim.max_iters, 17u);
  EXPECT_THROW(set_config_value(c, "optim.nope", "1"), ConfigError);
  EXPECT_THROW(set_config_value(c, "optim.max_iters", "x"), ConfigError);

  const auto dir = std::filesystem::temp_directory_path() / "rcnet_test_config";
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "run.cfg");
    out << "data.train = images/train.txt\ndata.val = /abs/val.txt\n";
  }
  const RunConfig loaded = load_config(dir / "run.cfg");
  EXPECT_EQ(loaded.resolve(loaded.train_source), dir / "images/train.txt");
  EXPECT_EQ(loaded.resolve(loaded.val_source), std::filesystem::path("/abs/val.txt"));
  EXPECT_THROW(load_config(dir / "missing.cfg"), IoError);
}

TEST(Config, ShippedPresetsParseAndValidate) {
  for (const char* name : {"desk_denoise.cfg", "desk_sr.cfg", "desk_stability.cfg"}) {
    const auto path = std::filesystem::path(RCNET_SOURCE_DIR) / "configs" / name;
    const RunConfig c = load_config(path);
    EXPECT_NO_THROW(c.validate()) << name;
    EXPECT_TRUE(c.net.desk_scale) << name;
    EXPECT_EQ(c.net.num_blocks, 2u) << name;
    EXPECT_EQ(c.net.block.width, 16u) << name;
    EXPECT_EQ(c.net.n_dense, 32u) << name;
  }
}

}  // namespace
}  // namespace rcnet
