#include <gtest/gtest.h>

#include "mcas/verify/history.hpp"

using namespace mcas;
using namespace mcas::verify;

namespace {

History sample() {
  History h;
  h.push_back({0, EventKind::invoke, McasOp{{{0, 1, 2}, {3, 4, 5}}}, std::nullopt, 0});
  h.push_back({1, EventKind::invoke, ReadOp{3}, std::nullopt, 1});
  h.push_back({1, EventKind::respond, ReadOp{3}, 4, 2});
  h.push_back({0, EventKind::respond, McasOp{{{0, 1, 2}, {3, 4, 5}}}, 1, 3});
  h.push_back({1, EventKind::invoke, McasOp{{{3, 9, 9}}}, std::nullopt, 4});
  h.push_back({1, EventKind::respond, McasOp{{{3, 9, 9}}}, 0, 5});
  return h;
}

}  // namespace

TEST(History, FormatParseRoundTrip) {
  auto h = sample();
  auto text = format_history(h);
  EXPECT_EQ(parse_history(text), h);
  EXPECT_NE(text.find("0 invoke mcas 0:1:2,3:4:5 - 0"), std::string::npos);
  EXPECT_NE(text.find("1 respond read 3 4 2"), std::string::npos);
  EXPECT_NE(text.find("1 respond mcas 3:9:9 false 5"), std::string::npos);
}

TEST(History, ParseSkipsCommentsAndBlankLines) {
  auto h = parse_history("# header\n\n0 invoke read 1 - 0\n0 respond read 1 7 1  # trailing\n");
  ASSERT_EQ(h.size(), 2u);
  EXPECT_EQ(h[1].result, 7u);
}

TEST(History, ParseErrors) {
  EXPECT_THROW(parse_history("0 invoke read 1 -\n"), HistoryError);
  EXPECT_THROW(parse_history("0 begin read 1 - 0\n"), HistoryError);
  EXPECT_THROW(parse_history("0 invoke write 1 - 0\n"), HistoryError);
  EXPECT_THROW(parse_history("x invoke read 1 - 0\n"), HistoryError);
  EXPECT_THROW(parse_history("0 invoke mcas 1:2 - 0\n"), HistoryError);
  EXPECT_THROW(parse_history("0 respond mcas 1:2:3 maybe 0\n"), HistoryError);
  EXPECT_THROW(parse_history("0 invoke read 1 5 0\n"), HistoryError);
  EXPECT_THROW(parse_history("0 respond read 1 - 0\n"), HistoryError);
}

TEST(History, PairOperations) {
  auto ops = pair_operations(sample());
  ASSERT_EQ(ops.size(), 3u);
  EXPECT_EQ(ops[0].thread, 0u);
  EXPECT_EQ(ops[0].invoked, 0u);
  EXPECT_EQ(ops[0].responded, 3u);
  EXPECT_EQ(ops[0].result, 1u);
  EXPECT_EQ(ops[1].result, 4u);
  EXPECT_EQ(ops[2].result, 0u);
}

TEST(History, PendingOperationIsIncomplete) {
  auto h = sample();
  h.push_back({0, EventKind::invoke, ReadOp{0}, std::nullopt, 6});
  auto ops = pair_operations(h);
  ASSERT_EQ(ops.size(), 4u);
  EXPECT_FALSE(ops.back().complete());
}

TEST(History, PairingErrors) {
  EXPECT_THROW(pair_operations(parse_history("0 respond read 1 7 0\n")), HistoryError);
  EXPECT_THROW(pair_operations(parse_history("0 invoke read 1 - 0\n0 invoke read 2 - 1\n")), HistoryError);
  EXPECT_THROW(pair_operations(parse_history("0 invoke read 1 - 0\n0 respond read 2 7 1\n")), HistoryError);
}

TEST(HistoryRecorder, MergesByTimestamp) {
  HistoryRecorder rec(2, 8);
  rec.invoke(0, ReadOp{0});
  rec.invoke(1, ReadOp{1});
  rec.respond(1, ReadOp{1}, 3);
  rec.respond(0, ReadOp{0}, 2);
  auto h = rec.merge();
  ASSERT_EQ(h.size(), 4u);
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_EQ(h[i].timestamp, i);
  EXPECT_EQ(h[2].thread, 1u);
  EXPECT_EQ(h[3].result, 2u);
}

TEST(History, TimestampsMustIncrease) {
  EXPECT_THROW(pair_operations(parse_history("0 invoke read 1 - 4\n1 invoke read 1 - 4\n")), HistoryError);
}

TEST(HistoryRecorder, RejectsOverflowAndUnknownThread) {
  HistoryRecorder rec(1, 1);
  rec.invoke(0, ReadOp{0});
  EXPECT_THROW(rec.respond(0, ReadOp{0}, 1), HistoryError);
  EXPECT_THROW(rec.invoke(1, ReadOp{0}), HistoryError);
}
