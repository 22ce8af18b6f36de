#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "mcas/core.hpp"
#include "mcas/harris.hpp"
#include "mcas/verify/aba.hpp"
#include "mcas/verify/harness.hpp"
#include "mcas/verify/linearizability.hpp"

using namespace mcas;
using namespace mcas::verify;

namespace {

McasConfig hcfg(std::size_t words = 8, unsigned threads = 2) {
  McasConfig c;
  c.arena_words = words;
  c.max_width = 4;
  c.descriptors_per_thread = 64;
  c.reclamation.max_threads = threads;
  c.reclamation.retire_threshold = 8;
  c.reclamation.read_assist_probability = 0;
  return c;
}

using H = HarrisMcas<>;

}  // namespace

TEST(Harris, UncontendedBudgetIsThreeKPlusOne) {
  for (unsigned k = 1; k <= 4; ++k) {
    H e(hcfg());
    auto s = e.register_thread();
    std::vector<WordEntry> w;
    for (unsigned i = 0; i < k; ++i) w.push_back({2 * i, 0, i + 1});
    auto d = e.make_descriptor(s, std::span<const WordEntry>(w));
    auto before = e.counters(s).cas;
    ASSERT_TRUE(e.execute(s, d));
    EXPECT_EQ(e.counters(s).cas - before, 3u * k + 1) << "k=" << k;
    for (unsigned i = 0; i < k; ++i) EXPECT_EQ(e.read(s, 2 * i), i + 1);
    EXPECT_EQ(e.arena_handles(), 0u);
  }
}

TEST(Harris, MismatchUnlocksToOldValues) {
  std::vector<Value> init{1, 2, 3};
  H e(hcfg(), init);
  auto s = e.register_thread();
  auto d = e.make_descriptor(s, {{0, 1, 10}, {1, 2, 20}, {2, 99, 30}});
  EXPECT_FALSE(e.execute(s, d));
  EXPECT_EQ(e.status(d).code, StatusCode::failed);
  for (std::size_t a = 0; a < 3; ++a) EXPECT_EQ(e.read(s, a), init[a]);
  EXPECT_EQ(e.arena_handles(), 0u);
}

TEST(Harris, SequentialOracle) {
  H e(hcfg(6, 1));
  auto s = e.register_thread();
  SequentialState oracle(6);
  std::mt19937_64 rng(42);
  for (int i = 0; i < 3000; ++i) {
    std::vector<std::size_t> addrs{0, 1, 2, 3, 4, 5};
    std::shuffle(addrs.begin(), addrs.end(), rng);
    const auto k = 1 + rng() % 3;
    McasOp m;
    for (std::size_t j = 0; j < k; ++j) {
      const auto a = addrs[j];
      const Value old = rng() % 4 == 0 ? oracle.at(a) + 1 : oracle.at(a);
      m.entries.push_back({a, old, rng() % 50});
    }
    const auto expected = apply_in_place(oracle, m);
    EXPECT_EQ(execute_operation(e, s, m), expected);
  }
  for (std::size_t a = 0; a < 6; ++a) EXPECT_EQ(e.read(s, a), oracle.at(a));
}

TEST(Harris, ReaderHelpsParkedOperation) {
  std::vector<Value> init{1, 2};
  H e(hcfg(), init);
  std::vector<Program> programs{{McasOp{{{0, 1, 10}, {1, 2, 20}}}}, {ReadOp{0}}};
  auto h = replay_schedule(e, programs, parse_script("0 until cas 1\n1 finish\n"));
  auto ops = pair_operations(h);
  ASSERT_EQ(ops.size(), 2u);
  for (const auto& op : ops) {
    if (std::holds_alternative<ReadOp>(op.op)) {
      EXPECT_EQ(op.result, 10u);
    } else {
      EXPECT_EQ(op.result, 1u);
    }
  }
  EXPECT_EQ(e.total_counters().helps, 1u);
  EXPECT_EQ(e.arena_handles(), 0u);
}

TEST(Harris, ConflictingCallersAgreeOnOutcome) {
  // Both threads submit operations on the same two words; thread 1 helps
  // thread 0's descriptor through to completion and then fails its own.
  std::vector<Value> init{1, 2};
  H e(hcfg(8, 3), init);
  std::vector<Program> programs{{McasOp{{{0, 1, 10}, {1, 2, 20}}}},
                                {McasOp{{{0, 1, 5}, {1, 2, 6}}}}};
  auto h = replay_schedule(e, programs, parse_script("0 until cas 1\n1 finish\n"));
  auto ops = pair_operations(h);
  ASSERT_EQ(ops.size(), 2u);
  EXPECT_EQ(*ops[0].result + *ops[1].result, 1u);
  EXPECT_EQ(check_linearizable(h, SequentialState(init)).verdict, Verdict::yes);
  auto t = e.register_thread();
  EXPECT_EQ(e.read(t, 0), 10u);
  EXPECT_EQ(e.read(t, 1), 20u);
}

TEST(Rdcss, InstallsWhenControlMatches) {
  H e(hcfg());
  auto s = e.register_thread();
  auto d = e.make_descriptor(s, {{2, 0, 9}});
  const auto active = McasStatus{StatusCode::active, false}.raw();
  const auto old = WordCodec<2>::encode_value(0);
  e.reclamation().epoch_enter(s);
  auto seen = e.rdcss(s, e.layout().status_addr(d), active, 2, old, e.handle_word(d, 0));
  e.reclamation().epoch_exit(s);
  EXPECT_EQ(seen, old);
  EXPECT_EQ(e.raw_word(2), e.handle_word(d, 0));
}

TEST(Rdcss, RestoresWhenControlDiffers) {
  H e(hcfg());
  auto s = e.register_thread();
  auto d = e.make_descriptor(s, {{3, 0, 9}});
  const auto old = WordCodec<2>::encode_value(0);
  const auto wrong = McasStatus{StatusCode::successful, false}.raw();
  e.reclamation().epoch_enter(s);
  auto seen = e.rdcss(s, e.layout().status_addr(d), wrong, 3, old, e.handle_word(d, 0));
  e.reclamation().epoch_exit(s);
  EXPECT_EQ(seen, old);
  EXPECT_EQ(e.raw_word(3), old);
}

TEST(Rdcss, ReportsDataMismatch) {
  std::vector<Value> init{0, 0, 0, 0, 7};
  H e(hcfg(), init);
  auto s = e.register_thread();
  auto d = e.make_descriptor(s, {{4, 0, 9}});
  const auto active = McasStatus{StatusCode::active, false}.raw();
  e.reclamation().epoch_enter(s);
  auto seen = e.rdcss(s, e.layout().status_addr(d), active, 4, WordCodec<2>::encode_value(0),
                      e.handle_word(d, 0));
  e.reclamation().epoch_exit(s);
  EXPECT_EQ(seen, WordCodec<2>::encode_value(7));
  EXPECT_EQ(e.raw_word(4), WordCodec<2>::encode_value(7));
}

TEST(Harris, StressLeavesNoHandles) {
  H e(hcfg(6, 4));
  WorkloadSpec spec{6, 3, 30, 300, 7};
  auto h = stress_history(e, 4, spec, 0.05);
  EXPECT_EQ(e.arena_handles(), 0u);
  EXPECT_EQ(check_linearizable(h, SequentialState(6)).verdict, Verdict::yes);
}

TEST(NaiveHarris, CorrectWithoutConcurrency) {
  NaiveHarrisMcas<> e(hcfg(4, 1));
  auto s = e.register_thread();
  auto d = e.make_descriptor(s, {{0, 0, 1}, {1, 0, 1}});
  EXPECT_TRUE(e.execute(s, d));
  auto d2 = e.make_descriptor(s, {{0, 0, 2}, {1, 1, 2}});
  EXPECT_FALSE(e.execute(s, d2));
  EXPECT_EQ(e.read(s, 0), 1u);
  EXPECT_EQ(e.read(s, 1), 1u);
  auto before = e.counters(s).cas;
  auto d3 = e.make_descriptor(s, {{2, 0, 1}});
  EXPECT_TRUE(e.execute(s, d3));
  EXPECT_EQ(e.counters(s).cas - before, 3u);
}

namespace {

McasConfig aba_cfg() {
  McasConfig c = hcfg(2, 3);
  c.max_width = 2;
  return c;
}

}  // namespace

TEST(Aba, NaiveVariantIsCaught) {
  auto r = run_aba_scenario<NaiveHarrisMcas<>>(aba_cfg());
  EXPECT_EQ(r.check.verdict, Verdict::violation);
  EXPECT_FALSE(r.check.window.empty());
  EXPECT_EQ(r.a1, AbaScenario::v1);
  EXPECT_EQ(r.a2, AbaScenario::v2_new);
}

TEST(Aba, HarrisSurvives) {
  auto r = run_aba_scenario<HarrisMcas<>>(aba_cfg());
  EXPECT_EQ(r.check.verdict, Verdict::yes);
  EXPECT_EQ(r.a1, AbaScenario::v1);
  EXPECT_EQ(r.a2, AbaScenario::v2);
}

TEST(Aba, AoptSurvives) {
  auto r = run_aba_scenario<VolatileMcas<>>(aba_cfg());
  EXPECT_EQ(r.check.verdict, Verdict::yes);
  EXPECT_EQ(r.a1, AbaScenario::v1);
  EXPECT_EQ(r.a2, AbaScenario::v2);
}

TEST(Aba, ReplayIsDeterministic) {
  auto a = run_aba_scenario<NaiveHarrisMcas<>>(aba_cfg());
  auto b = run_aba_scenario<NaiveHarrisMcas<>>(aba_cfg());
  EXPECT_EQ(a.check.operations.size(), b.check.operations.size());
  EXPECT_EQ(a.a2, b.a2);
}
