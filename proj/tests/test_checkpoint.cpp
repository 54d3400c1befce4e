#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "rcnet/checkpoint.hpp"
#include "support.hpp"

namespace rcnet {
namespace {

RunConfig tiny_run(Precision p) {
  RunConfig c;
  c.precision = p;
  c.net = testing::tiny_config();
  c.seed = 5;
  return c;
}

// A network whose BN running statistics and parameters have moved away from
// their initial values, so a restore that silently rebuilt would be caught.
template <typename T>
Network<T> trained_like(const RunConfig& c) {
  auto net = Network<T>::build(c.net, c.seed);
  std::uint64_t seed = 40;
  for (auto& b : net.buffers()) testing::fill_random<T>(b.value, ++seed, 0.1, 1.0);
  return net;
}

template <typename T>
void check_round_trip(Precision p) {
  const RunConfig c = tiny_run(p);
  auto net = trained_like<T>(c);
  net.set_mode(NetMode::eval);
  const auto x = testing::random_tensor<T>({2, 1, 11, 13}, 3);
  const auto before = net.infer(x);

  const std::string bytes = encode_checkpoint(c, 123, net);
  auto any = decode_checkpoint(bytes);
  ASSERT_TRUE(std::holds_alternative<Checkpoint<T>>(any));
  auto& ck = std::get<Checkpoint<T>>(any);
  EXPECT_EQ(ck.iteration, 123u);
  EXPECT_EQ(ck.config, c);
  EXPECT_FALSE(ck.optimizer.has_value());
  EXPECT_EQ(ck.net.infer(x), before);
  EXPECT_EQ(encode_checkpoint(ck.config, ck.iteration, ck.net), bytes);
}

TEST(Checkpoint, RoundTripIsBitwiseInBothPrecisions) {
  check_round_trip<float>(Precision::single);
  check_round_trip<double>(Precision::double_);
}

TEST(Checkpoint, HeaderLayout) {
  const RunConfig c = tiny_run(Precision::single);
  auto net = Network<float>::build(c.net, c.seed);
  const std::string bytes = encode_checkpoint(c, 7, net);
  EXPECT_EQ(bytes.substr(0, 4), "RCN1");
  EXPECT_EQ(bytes.substr(4, 4), std::string("\x01\x00\x00\x00", 4));
  const std::string text = serialize_config(c);
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= std::uint64_t(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
  EXPECT_EQ(len, text.size());
  EXPECT_EQ(bytes.substr(16, text.size()), text);
  EXPECT_EQ(static_cast<unsigned char>(bytes[16 + text.size()]), 7u);
}

TEST(Checkpoint, OptimizerStateSurvives) {
  const RunConfig c = tiny_run(Precision::double_);
  auto net = trained_like<double>(c);
  SGDState<double> st;
  for (const auto& p : net.parameters()) {
    st.velocity.emplace_back(p.value.size());
    testing::fill_random<double>(st.velocity.back(), st.velocity.size());
  }
  st.iteration = 9;
  auto any = decode_checkpoint(encode_checkpoint(c, 9, net, &st));
  auto& ck = std::get<Checkpoint<double>>(any);
  ASSERT_TRUE(ck.optimizer.has_value());
  EXPECT_EQ(ck.optimizer->velocity, st.velocity);
  EXPECT_EQ(ck.optimizer->iteration, 9u);
}

TEST(Checkpoint, FileRoundTripAndDetection) {
  const auto dir = std::filesystem::temp_directory_path() / "rcnet_test_ckpt";
  std::filesystem::create_directories(dir);
  const RunConfig c = tiny_run(Precision::single);
  auto net = trained_like<float>(c);
  save_checkpoint(dir / "a.rcn", c, 1, net);
  EXPECT_TRUE(is_checkpoint_file(dir / "a.rcn"));
  auto any = load_checkpoint(dir / "a.rcn");
  const auto x = testing::random_tensor<float>({1, 1, 9, 9}, 8);
  EXPECT_EQ(std::get<Checkpoint<float>>(any).net.infer(x), net.infer(x));
  {
    std::ofstream out(dir / "plain.cfg");
    out << serialize_config(c);
  }
  EXPECT_FALSE(is_checkpoint_file(dir / "plain.cfg"));
  EXPECT_THROW(load_checkpoint(dir / "absent.rcn"), IoError);
}

TEST(Checkpoint, CorruptInputsAreRejected) {
  const RunConfig c = tiny_run(Precision::single);
  auto net = Network<float>::build(c.net, c.seed);
  const std::string good = encode_checkpoint(c, 0, net);

  std::string magic = good;
  magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(magic), IoError);

  std::string version = good;
  version[4] = 2;
  try {
    decode_checkpoint(version);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("version 2"), std::string::npos);
  }

  for (std::size_t cut : {std::size_t{3}, std::size_t{20}, good.size() / 2, good.size() - 1})
    EXPECT_THROW(decode_checkpoint(good.substr(0, cut)), IoError) << cut;
  EXPECT_THROW(decode_checkpoint(good + "x"), IoError);

  // A checkpoint whose stored config describes a different architecture
  // cannot supply every buffer.
  RunConfig wider = c;
  wider.net.block.width = 6;
  auto other = Network<float>::build(wider.net, 1);
  std::string mixed = encode_checkpoint(wider, 0, other);
  const std::string old_text = serialize_config(wider), new_text = serialize_config(c);
  ASSERT_EQ(old_text.size(), new_text.size());
  mixed.replace(16, old_text.size(), new_text);
  EXPECT_THROW(decode_checkpoint(mixed), IoError);
}

TEST(Checkpoint, EncodeChecksConfigAgreement) {
  const RunConfig c = tiny_run(Precision::double_);
  auto net = Network<float>::build(c.net, c.seed);
  EXPECT_THROW(encode_checkpoint(c, 0, net), Error);
  RunConfig d = tiny_run(Precision::single);
  d.net.n_dense = 6;
  EXPECT_THROW(encode_checkpoint(d, 0, net), Error);
}

}  // namespace
}  // namespace rcnet
