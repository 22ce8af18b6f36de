#include <gtest/gtest.h>

#include "mcas/verify/sequential.hpp"

using namespace mcas;
using namespace mcas::verify;

TEST(SequentialApply, MatchingMcasWrites) {
  auto [s, r] = sequential_apply(SequentialState({5}), McasOp{{{0, 5, 6}}});
  EXPECT_EQ(r, 1u);
  EXPECT_EQ(s, SequentialState({6}));
}

TEST(SequentialApply, OneMismatchLeavesStateUnchanged) {
  SequentialState start({5, 9});
  auto [s, r] = sequential_apply(start, McasOp{{{0, 5, 6}, {1, 7, 8}}});
  EXPECT_EQ(r, 0u);
  EXPECT_EQ(s, start);
}

TEST(SequentialApply, ReadReturnsValue) {
  SequentialState start({5});
  auto [s, r] = sequential_apply(start, ReadOp{0});
  EXPECT_EQ(r, 5u);
  EXPECT_EQ(s, start);
}

TEST(SequentialApply, UnknownAddress) {
  EXPECT_THROW(sequential_apply(SequentialState({1, 2}), ReadOp{2}), UnknownAddressError);
  EXPECT_THROW(sequential_apply(SequentialState({1, 2}), McasOp{{{0, 1, 2}, {5, 0, 0}}}), UnknownAddressError);
}

TEST(SequentialApply, MismatchOnLaterEntryWritesNothing) {
  SequentialState s({1, 2, 3});
  EXPECT_EQ(apply_in_place(s, McasOp{{{0, 1, 10}, {1, 2, 20}, {2, 4, 30}}}), 0u);
  EXPECT_EQ(s, SequentialState({1, 2, 3}));
  EXPECT_EQ(apply_in_place(s, McasOp{{{0, 1, 10}, {1, 2, 20}, {2, 3, 30}}}), 1u);
  EXPECT_EQ(s, SequentialState({10, 20, 30}));
}
