#include <filesystem>
#include <vector>

#include <gtest/gtest.h>

#include "gcl/ago.hpp"
#include "gcl/checkpoint.hpp"
#include "gcl/error.hpp"

namespace {

gcl::Checkpoint sample() {
  auto c = gcl::Competitor::create({1, 16, 2, 32, 24, 2, false}, 9, 8, 1, {});
  for (gcl::Tensor* t : c.trainable()) {
    for (double& g : t->grad()) g = 0.01;
  }
  gcl::adamw_step(c.optimizer, c.trainable(), 1e-3);
  return {c.model, 42, c.head, c.optimizer};
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto ckpt = sample();
  const auto bytes = gcl::serialize_checkpoint(ckpt);
  const auto back = gcl::deserialize_checkpoint(bytes);
  EXPECT_EQ(back.step, 42u);
  EXPECT_EQ(back.params.config, ckpt.params.config);
  EXPECT_EQ(gcl::param_checksum(back.params), gcl::param_checksum(ckpt.params));
  ASSERT_TRUE(back.head && back.optimizer);
  EXPECT_EQ(back.head->owner, 1u);
  EXPECT_EQ(back.head->query.storage(), ckpt.head->query.storage());
  EXPECT_EQ(back.optimizer->m, ckpt.optimizer->m);
  EXPECT_EQ(back.optimizer->v, ckpt.optimizer->v);
  EXPECT_EQ(back.optimizer->step, 1u);
  EXPECT_EQ(gcl::serialize_checkpoint(back), bytes);
}

TEST(Checkpoint, OptionalPartsMayBeAbsent) {
  gcl::Checkpoint ckpt{gcl::init_model({1, 16, 2, 32, 24, 2, true}, 3), 0, {}, {}};
  const auto back = gcl::deserialize_checkpoint(gcl::serialize_checkpoint(ckpt));
  EXPECT_FALSE(back.head);
  EXPECT_FALSE(back.optimizer);
  EXPECT_TRUE(back.params.config.tie_output);
}

TEST(Checkpoint, DetectsCorruption) {
  auto bytes = gcl::serialize_checkpoint(sample());
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x01;
  EXPECT_THROW(gcl::deserialize_checkpoint(flipped), gcl::InputError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 9);
  EXPECT_THROW(gcl::deserialize_checkpoint(truncated), gcl::InputError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(gcl::deserialize_checkpoint(magic), gcl::InputError);
  EXPECT_THROW(gcl::deserialize_checkpoint({}), gcl::InputError);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "gcl_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "m.ckpt";
  const auto ckpt = sample();
  gcl::save_checkpoint(path, ckpt);
  const auto back = gcl::load_checkpoint(path);
  EXPECT_EQ(gcl::param_checksum(back.params), gcl::param_checksum(ckpt.params));
  std::filesystem::remove_all(dir);
  EXPECT_THROW(gcl::load_checkpoint(path), gcl::InputError);
}

}  // namespace
