#include <gtest/gtest.h>

#include <cmath>

#include "memo/embedding.hpp"
#include "test_support.hpp"

namespace memo {
namespace {

const HashingEmbedder kEmbedder;

TEST(Cosine, SelfIsOne) {
  const Vector v = kEmbedder.embed("open the toaster door");
  EXPECT_NEAR(cosine(v, v), 1.0, 1e-12);
}

TEST(Cosine, OrthogonalIsZero) {
  EXPECT_EQ(cosine(testing::unit_axis(8, 0), testing::unit_axis(8, 3)), 0.0);
}

TEST(Cosine, HandEvaluatedDiagonal) {
  // [1,0,...] against [1,1,0,...]: dot 1, norms 1 and sqrt(2).
  const Vector a = Vector({1, 0, 0, 0}).normalized();
  const Vector b = Vector({1, 1, 0, 0}).normalized();
  EXPECT_NEAR(cosine(a, b), 0.70710678, 1e-8);
  EXPECT_NEAR(cosine(a, b), 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(Cosine, ZeroVectorGivesZero) {
  EXPECT_EQ(cosine(Vector::zero(4), Vector({1, 0, 0, 0})), 0.0);
  EXPECT_EQ(cosine(Vector::zero(4), Vector::zero(4)), 0.0);
}

TEST(Cosine, SymmetricAndBounded) {
  testing::Rng rng(9);
  const auto centers = testing::random_centers(rng, 3, 32);
  for (int i = 0; i < 200; ++i) {
    const Vector a = testing::noisy_unit(rng, centers, 1.0);
    const Vector b = testing::noisy_unit(rng, centers, 1.0);
    EXPECT_EQ(cosine(a, b), cosine(b, a));
    EXPECT_LE(std::abs(cosine(a, b)), 1.0);
  }
}

TEST(HashingEmbedder, Deterministic) {
  EXPECT_EQ(kEmbedder.embed("open"), kEmbedder.embed("open"));
  EXPECT_EQ(HashingEmbedder(256).embed("pour the can"), HashingEmbedder(256).embed("pour the can"));
}

TEST(HashingEmbedder, EmptyTextIsZero) {
  EXPECT_TRUE(kEmbedder.embed("").is_zero());
  EXPECT_TRUE(kEmbedder.embed("  \t ").is_zero());
  EXPECT_EQ(kEmbedder.embed("").dim(), 256u);
}

TEST(HashingEmbedder, UnitNorm) {
  for (const char* text : {"open", "open the door", "Put the banana on the plate!", "x y z w"}) {
    EXPECT_NEAR(kEmbedder.embed(text).norm(), 1.0, 1e-9) << text;
  }
}

TEST(HashingEmbedder, SharedTokensScoreHigher) {
  const Vector door = kEmbedder.embed("open the door");
  EXPECT_GT(cosine(door, kEmbedder.embed("open door")), cosine(door, kEmbedder.embed("pour liquid")));
}

TEST(HashingEmbedder, CaseAndPunctuationInsensitive) {
  EXPECT_EQ(kEmbedder.embed("Open the Door!"), kEmbedder.embed("open the door"));
}

TEST(HashingEmbedder, BitStableReference) {
  // Pinned so that a change in hashing shows up as a skillbook-format break.
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(Tokenize, LowercaseAlphanumericWords) {
  EXPECT_EQ(tokenize("Open the toaster-door, NOW 2x"),
            (std::vector<std::string>{"open", "the", "toaster", "door", "now", "2x"}));
}

TEST(EmbedKey, ObjectVectorIsNormalizedMean) {
  const EmbeddingKey k = embed_key(kEmbedder, "open", {"toaster", "door"});
  const Vector a = kEmbedder.embed("toaster");
  const Vector b = kEmbedder.embed("door");
  std::vector<double> mean(a.dim());
  for (size_t i = 0; i < mean.size(); ++i) mean[i] = (a[i] + b[i]) / 2;
  const Vector want = Vector(mean).normalized();
  for (size_t i = 0; i < want.dim(); ++i) EXPECT_NEAR(k.v_obj[i], want[i], 1e-12);
  EXPECT_EQ(k.v_act, kEmbedder.embed("open"));
  EXPECT_FALSE(k.is_global);
  EXPECT_FALSE(k.v_scene.has_value());
}

TEST(EmbedKey, NoObjectsGivesZeroObjectVector) {
  EXPECT_TRUE(embed_key(kEmbedder, "open", {}).v_obj.is_zero());
}

TEST(EmbedKey, ObjectOrderDoesNotMatter) {
  const auto a = embed_key(kEmbedder, "put on", {"banana", "plate", "table"});
  const auto b = embed_key(kEmbedder, "put on", {"table", "banana", "plate"});
  for (size_t i = 0; i < a.v_obj.dim(); ++i) EXPECT_NEAR(a.v_obj[i], b.v_obj[i], 1e-15);
}

TEST(EmbedKey, IdenticalInputsIdenticalKeys) {
  EXPECT_EQ(embed_key(kEmbedder, "open", {"toaster door"}), embed_key(kEmbedder, "open", {"toaster door"}));
}

TEST(EmbedKey, SceneDigestSortedAndRounded) {
  SceneGraph g;
  g.nodes.push_back({"b", "b", {0.123, 0, 0, 0, 0, 0}, {0.1, 0.1, 0.1}});
  g.nodes.push_back({"a", "a", {0.5, 0.25, 0, 0, 0, 0}, {0.1, 0.1, 0.1}});
  SceneGraph h = g;
  std::swap(h.nodes[0], h.nodes[1]);
  h.nodes[0].pose.x += 1e-4;  // below the centimeter rounding
  EXPECT_EQ(scene_digest(g), scene_digest(h));
  const auto k = embed_key(kEmbedder, "open", {"a"}, &g);
  ASSERT_TRUE(k.v_scene.has_value());
  EXPECT_EQ(*k.v_scene, kEmbedder.embed(scene_digest(g)));
}

TEST(GlobalKey, Shared) {
  const EmbeddingKey g = global_key(kEmbedder);
  EXPECT_TRUE(g.is_global);
  EXPECT_EQ(g.action_text, kGlobalMarker);
  EXPECT_EQ(g, global_key(kEmbedder));
}

}  // namespace
}  // namespace memo
