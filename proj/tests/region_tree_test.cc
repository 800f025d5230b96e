// Copyright 2026 The capmon Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "capmon/region_tree.h"

#include "gtest/gtest.h"

namespace capmon {
namespace {

constexpr uint64_t P = kPageSize;
constexpr DomainId kOwner{0};
constexpr DomainId kOther{1};

PhysRange Pages(uint64_t first, uint64_t last) { return {first * P, last * P}; }

ViewSegment Seg(uint64_t first, uint64_t last, const char* rights,
                RegionStatus status) {
  return {Pages(first, last), *AccessRights::Parse(rights), status};
}

constexpr RegionStatus kEx = RegionStatus::kExclusive;
constexpr RegionStatus kAl = RegionStatus::kAliased;

TEST(RegionTreeTest, RootIsExclusive) {
  RegionTree tree;
  RegionId root = tree.CreateRoot(kOwner, Pages(0, 8));
  EXPECT_EQ(*tree.View(root), (EffectiveView{Seg(0, 8, "RWX", kEx)}));
}

TEST(RegionTreeTest, AliasSharesAndCarveRemoves) {
  RegionTree tree;
  RegionId root = tree.CreateRoot(kOwner, Pages(0, 8));
  RegionId a = *tree.Alias(kOwner, root, Pages(1, 2), AccessRights(3));
  RegionId c = *tree.Carve(kOwner, root, Pages(4, 6), AccessRights::All());
  EXPECT_EQ(*tree.View(root),
            (EffectiveView{Seg(0, 1, "RWX", kEx), Seg(1, 2, "RWX", kAl),
                           Seg(2, 4, "RWX", kEx), Seg(6, 8, "RWX", kEx)}));
  EXPECT_EQ(*tree.View(a), (EffectiveView{Seg(1, 2, "RW", kAl)}));
  EXPECT_EQ(*tree.View(c), (EffectiveView{Seg(4, 6, "RWX", kEx)}));
  EXPECT_EQ(tree.Find(a)->status, kAl);
  EXPECT_EQ(tree.Find(c)->status, kEx);
}

TEST(RegionTreeTest, CarveOfAliasedRangeIsAliased) {
  RegionTree tree;
  RegionId root = tree.CreateRoot(kOwner, Pages(0, 8));
  ASSERT_TRUE(tree.Alias(kOwner, root, Pages(0, 2), AccessRights::All()).ok());
  // Carving the remaining exclusive part keeps it exclusive.
  RegionId ex = *tree.Carve(kOwner, root, Pages(2, 4), AccessRights::All());
  EXPECT_EQ(tree.Find(ex)->status, kEx);
  // A carve of an alias child is never exclusive.
  RegionId a = *tree.Alias(kOwner, root, Pages(4, 8), AccessRights::All());
  RegionId c = *tree.Carve(kOwner, a, Pages(4, 6), AccessRights::All());
  EXPECT_EQ(tree.Find(c)->status, kAl);
  EXPECT_EQ(*tree.View(c), (EffectiveView{Seg(4, 6, "RWX", kAl)}));
}

TEST(RegionTreeTest, DerivationErrors) {
  RegionTree tree;
  RegionId root = tree.CreateRoot(kOwner, Pages(0, 8));
  RegionId a = *tree.Alias(kOwner, root, Pages(0, 2), AccessRights(1));
  ASSERT_TRUE(tree.Carve(kOwner, root, Pages(4, 6), AccessRights::All()).ok());

  EXPECT_EQ(tree.Carve(kOther, root, Pages(2, 3), AccessRights(1)).code(),
            ErrorCode::kNotOwner);
  EXPECT_EQ(tree.Carve(kOwner, RegionId{99}, Pages(2, 3), AccessRights(1)).code(),
            ErrorCode::kUnknownRegion);
  EXPECT_EQ(tree.Carve(kOwner, root, {P, P + 10}, AccessRights(1)).code(),
            ErrorCode::kBadRange);
  EXPECT_EQ(tree.Carve(kOwner, root, Pages(3, 3), AccessRights(1)).code(),
            ErrorCode::kBadRange);
  EXPECT_EQ(tree.Carve(kOwner, root, Pages(2, 3), AccessRights(0)).code(),
            ErrorCode::kEmptyRights);
  EXPECT_EQ(tree.Alias(kOwner, a, Pages(0, 1), AccessRights(3)).code(),
            ErrorCode::kRightsEscalation);
  EXPECT_EQ(tree.Carve(kOwner, root, Pages(1, 3), AccessRights(1)).code(),
            ErrorCode::kOverlapsAlias);
  EXPECT_EQ(tree.Carve(kOwner, root, Pages(5, 7), AccessRights(1)).code(),
            ErrorCode::kOverlapsCarve);
  // Aliasing over a carved range fails because the parent lost it.
  EXPECT_EQ(tree.Alias(kOwner, root, Pages(5, 6), AccessRights(1)).code(),
            ErrorCode::kOutOfRange);
  EXPECT_EQ(tree.Alias(kOwner, root, Pages(7, 9), AccessRights(1)).code(),
            ErrorCode::kOutOfRange);
  // Aliases may overlap each other.
  EXPECT_TRUE(tree.Alias(kOwner, root, Pages(1, 3), AccessRights(1)).ok());
}

TEST(RegionTreeTest, RevokeRestoresParentAndDestroysSubtree) {
  RegionTree tree;
  RegionId root = tree.CreateRoot(kOwner, Pages(0, 8));
  RegionId c = *tree.Carve(kOwner, root, Pages(2, 8), AccessRights::All());
  RegionId g1 = *tree.Alias(kOwner, c, Pages(3, 4), AccessRights(3));
  RegionId g2 = *tree.Carve(kOwner, c, Pages(4, 8), AccessRights::All());
  RegionId gg = *tree.Carve(kOwner, g2, Pages(4, 5), AccessRights(1));

  EXPECT_EQ(tree.Revoke(kOther, root, c).code(), ErrorCode::kNotOwner);
  EXPECT_EQ(tree.Revoke(kOwner, root, g1).code(), ErrorCode::kNotAChild);

  auto destroyed = tree.Revoke(kOwner, root, c);
  ASSERT_TRUE(destroyed.ok());
  ASSERT_EQ(destroyed->size(), 4u);
  // Bottom-up: every node precedes its parent.
  auto pos = [&](RegionId id) {
    for (size_t i = 0; i < destroyed->size(); ++i) {
      if ((*destroyed)[i].id == id) return i;
    }
    return destroyed->size();
  };
  EXPECT_LT(pos(gg), pos(g2));
  EXPECT_LT(pos(g2), pos(c));
  EXPECT_LT(pos(g1), pos(c));
  for (RegionId id : {c, g1, g2, gg}) EXPECT_EQ(tree.Find(id), nullptr);
  EXPECT_EQ(*tree.View(root), (EffectiveView{Seg(0, 8, "RWX", kEx)}));
  EXPECT_TRUE(tree.Find(root)->children.empty());
}

TEST(RegionTreeTest, ViewIsLocalToDirectChildren) {
  RegionTree tree;
  RegionId root = tree.CreateRoot(kOwner, Pages(0, 8));
  RegionId c = *tree.Carve(kOwner, root, Pages(0, 4), AccessRights::All());
  EffectiveView before = *tree.View(root);
  // Grandchildren do not affect the root's view.
  ASSERT_TRUE(tree.Carve(kOwner, c, Pages(0, 2), AccessRights::All()).ok());
  ASSERT_TRUE(tree.Alias(kOwner, c, Pages(2, 4), AccessRights(1)).ok());
  EXPECT_EQ(*tree.View(root), before);
  EXPECT_EQ(*tree.View(c), (EffectiveView{Seg(2, 4, "RWX", kAl)}));
}

TEST(RegionTreeTest, HelperFunctions) {
  EXPECT_FALSE(PhysRange::Make(0, 10).ok());
  EXPECT_TRUE(PhysRange::Make(0, P).ok());
  EXPECT_EQ(AccessRights::Parse("RW_")->bits(), 3);
  EXPECT_EQ(AccessRights::Parse("x")->bits(), 4);
  EXPECT_FALSE(AccessRights::Parse("RQ").has_value());
  EXPECT_EQ(AccessRights(5).ToString(), "R_X");

  EffectiveView merged = NormalizeView(
      {Seg(0, 1, "RWX", kEx), Seg(1, 2, "RWX", kEx), Seg(2, 3, "RWX", kAl)});
  EXPECT_EQ(merged, (EffectiveView{Seg(0, 2, "RWX", kEx), Seg(2, 3, "RWX", kAl)}));
  EXPECT_TRUE(ViewCovers(merged, Pages(0, 3)));
  EXPECT_FALSE(ViewCovers(merged, Pages(0, 4)));
  EXPECT_EQ(ViewLookup(merged, 2 * P + 5)->status, kAl);
  EXPECT_EQ(ViewLookup(merged, 3 * P), nullptr);

  EffectiveView u = UnionViews({{Seg(0, 2, "R", kAl)}, {Seg(1, 3, "W", kEx)}});
  EXPECT_EQ(u, (EffectiveView{Seg(0, 1, "R", kAl), Seg(1, 2, "RW", kEx),
                              Seg(2, 3, "W", kEx)}));
}

}  // namespace
}  // namespace capmon
