#include <gtest/gtest.h>

#include "dcpr/checkpoint.hpp"
#include "dcpr/error.hpp"

using namespace dcpr;

namespace {

RegionModel sample_region() {
  Rng rng(1);
  GlobalModel g = init_global_model(3, 4, 0.01, rng);
  RegionModel r = init_region_model(g, {2, 5, 7}, {0, 2, 1}, 0.7);
  r.unit_spatial = sample_gaussian(rng, 1, 4);
  round_to_float(r);
  return r;
}

CheckpointError::Kind decode_kind(std::span<const std::uint8_t> bytes) {
  try {
    decode_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "decode succeeded";
  return CheckpointError::Kind::kIo;
}

}  // namespace

TEST(Sha256, KnownVector) {
  const std::string abc = "abc";
  const auto d = sha256({reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size()});
  EXPECT_EQ(hex(d), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Checkpoint, RegionRoundTripIsExact) {
  const RegionModel r = sample_region();
  const auto bytes = encode_checkpoint(to_checkpoint(r, "seed = 3\n"));
  const Checkpoint c = decode_checkpoint(bytes);
  EXPECT_EQ(c.kind, ModelKind::kRegion);
  EXPECT_EQ(c.config, "seed = 3\n");
  const RegionModel back = region_from_checkpoint(c);
  EXPECT_EQ(back.poi_emb, r.poi_emb);
  EXPECT_EQ(back.base.w_v, r.base.w_v);
  EXPECT_EQ(back.unit_spatial, r.unit_spatial);
  EXPECT_EQ(back.poi_ids, r.poi_ids);
  EXPECT_EQ(back.poi_category, r.poi_category);
  EXPECT_EQ(back.gamma_cat, r.gamma_cat);
  EXPECT_EQ(parameter_hash(back), parameter_hash(r));
  EXPECT_EQ(encode_checkpoint(to_checkpoint(back, c.config)), bytes);
}

TEST(Checkpoint, GlobalAndPatchRoundTrip) {
  Rng rng(2);
  GlobalModel g = init_global_model(4, 3, 0.02, rng);
  round_to_float(g);
  EXPECT_EQ(global_from_checkpoint(decode_checkpoint(encode_checkpoint(to_checkpoint(g, "")))).category_emb,
            g.category_emb);
  PatchModel p = init_patch_random(3, rng);
  round_to_float(p);
  const PatchModel q = patch_from_checkpoint(decode_checkpoint(encode_checkpoint(to_checkpoint(p, ""))));
  for (std::size_t l = 0; l < 4; ++l) {
    EXPECT_EQ(q.weight[l], p.weight[l]);
    EXPECT_EQ(q.bias[l], p.bias[l]);
  }
}

TEST(Checkpoint, CorruptionIsDetected) {
  const auto good = encode_checkpoint(to_checkpoint(sample_region(), "x = 1\n"));
  auto bad = good;
  bad[0] = 'X';
  EXPECT_EQ(decode_kind(bad), CheckpointError::Kind::kBadMagic);
  bad = good;
  bad[4] = 99;
  EXPECT_EQ(decode_kind(bad), CheckpointError::Kind::kVersion);
  bad = good;
  bad[good.size() / 2] ^= 1;
  EXPECT_EQ(decode_kind(bad), CheckpointError::Kind::kHash);
  EXPECT_EQ(decode_kind(std::span(good).first(good.size() - 40)), CheckpointError::Kind::kTruncated);
}

TEST(Checkpoint, WrongKindIsRejected) {
  Rng rng(3);
  const Checkpoint c = decode_checkpoint(encode_checkpoint(to_checkpoint(init_patch_random(3, rng), "")));
  EXPECT_THROW(region_from_checkpoint(c), CheckpointError);
}

TEST(ParameterHash, ChangesWithAnyParameter) {
  RegionModel r = sample_region();
  const Digest before = parameter_hash(r);
  r.unit_temporal[2] += 1.0;
  EXPECT_NE(parameter_hash(r), before);
}
