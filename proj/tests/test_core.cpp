#include <gtest/gtest.h>

#include <random>
#include <thread>
#include <vector>

#include "mcas/core.hpp"
#include "mcas/verify/harness.hpp"
#include "mcas/verify/sequential.hpp"

using namespace mcas;

namespace {

McasConfig small_config(std::size_t words = 8, unsigned threads = 4) {
  McasConfig c;
  c.arena_words = words;
  c.max_width = 4;
  c.descriptors_per_thread = 64;
  c.reclamation.max_threads = threads;
  return c;
}

}  // namespace

TEST(MakeDescriptor, SortsEntriesAndStartsActive) {
  VolatileMcas<> e(small_config());
  auto s = e.register_thread();
  auto d = e.make_descriptor(s, {{5, 1, 2}, {2, 3, 4}});
  EXPECT_EQ(e.status(d).code, StatusCode::active);
  ASSERT_EQ(e.word_count(d), 2u);
  EXPECT_EQ(e.word_descriptor(d, 0).address, 2u);
  EXPECT_EQ(e.word_descriptor(d, 1).address, 5u);
  EXPECT_EQ(MarkBitCodec::decode_value(e.word_descriptor(d, 0).old_word), 3u);
  EXPECT_EQ(MarkBitCodec::decode_value(e.word_descriptor(d, 1).new_word), 2u);
  EXPECT_EQ(e.word_descriptor(d, 0).parent, d);
}

TEST(MakeDescriptor, SingleEntry) {
  VolatileMcas<> e(small_config());
  auto s = e.register_thread();
  auto d = e.make_descriptor(s, {{3, 5, 6}});
  ASSERT_EQ(e.word_count(d), 1u);
  auto w = e.word_descriptor(d, 0);
  EXPECT_EQ(w.address, 3u);
  EXPECT_EQ(MarkBitCodec::decode_value(w.old_word), 5u);
  EXPECT_EQ(MarkBitCodec::decode_value(w.new_word), 6u);
}

TEST(MakeDescriptor, RejectsBadRequests) {
  VolatileMcas<> e(small_config());
  auto s = e.register_thread();
  EXPECT_THROW(e.make_descriptor(s, {{1, 0, 1}, {1, 2, 3}}), ContractError);
  EXPECT_THROW(e.make_descriptor(s, std::span<const WordEntry>{}), ContractError);
  EXPECT_THROW(e.make_descriptor(s, {{8, 0, 1}}), ContractError);
  EXPECT_THROW(e.make_descriptor(s, {{0, 0, 1}, {1, 0, 1}, {2, 0, 1}, {3, 0, 1}, {4, 0, 1}}), ContractError);
  EXPECT_THROW(e.make_descriptor(s, {{0, Value{1} << 63, 1}}), ContractError);
}

TEST(ReadInternal, PlainValue) {
  std::vector<Value> init{7};
  VolatileMcas<> e(small_config(), init);
  auto s = e.register_thread();
  e.reclamation().epoch_enter(s);
  auto r = e.read_internal(s, 0, std::nullopt);
  e.reclamation().epoch_exit(s);
  EXPECT_EQ(r.content, encode_word(Value{7}));
  EXPECT_EQ(r.value, 7u);
}

TEST(ReadInternal, HandleOfSuccessfulParentYieldsNew) {
  std::vector<Value> init{1};
  VolatileMcas<> e(small_config(), init);
  auto s = e.register_thread();
  auto d = e.make_descriptor(s, {{0, 1, 2}});
  ASSERT_TRUE(e.execute(s, d));
  e.reclamation().epoch_enter(s);
  auto r = e.read_internal(s, 0, std::nullopt);
  e.reclamation().epoch_exit(s);
  EXPECT_EQ(r.content, e.handle_word(d, 0));
  EXPECT_EQ(r.value, 2u);
}

TEST(ReadInternal, HandleOfFailedParentYieldsOld) {
  std::vector<Value> init{1, 9};
  VolatileMcas<> e(small_config(), init);
  auto s = e.register_thread();
  auto d = e.make_descriptor(s, {{0, 1, 2}, {1, 5, 6}});
  ASSERT_FALSE(e.execute(s, d));
  e.reclamation().epoch_enter(s);
  auto r = e.read_internal(s, 0, std::nullopt);
  e.reclamation().epoch_exit(s);
  EXPECT_EQ(r.content, e.handle_word(d, 0));
  EXPECT_EQ(r.value, 1u);
}

TEST(Mcas, SingleWordSuccessCostsTwoCases) {
  std::vector<Value> init{5};
  VolatileMcas<> e(small_config(), init);
  auto s = e.register_thread();
  auto before = e.counters(s).cas;
  auto d = e.make_descriptor(s, {{0, 5, 6}});
  EXPECT_TRUE(e.execute(s, d));
  EXPECT_EQ(e.counters(s).cas - before, 2u);
  EXPECT_EQ(e.raw_word(0), e.handle_word(d, 0));
  EXPECT_EQ(e.read(s, 0), 6u);
  EXPECT_EQ(e.status(d).code, StatusCode::successful);
}

TEST(Mcas, MismatchFailsAndLeavesValues) {
  std::vector<Value> init{5, 9};
  VolatileMcas<> e(small_config(), init);
  auto s = e.register_thread();
  auto before = e.counters(s).cas;
  auto d = e.make_descriptor(s, {{0, 5, 6}, {1, 5, 7}});
  EXPECT_FALSE(e.execute(s, d));
  EXPECT_EQ(e.status(d).code, StatusCode::failed);
  EXPECT_LE(e.counters(s).cas - before, 3u);
  EXPECT_EQ(e.read(s, 0), 5u);
  EXPECT_EQ(e.read(s, 1), 9u);
}

TEST(Mcas, UncontendedBudgetIsKPlusOne) {
  for (unsigned k = 1; k <= 4; ++k) {
    VolatileMcas<> e(small_config());
    auto s = e.register_thread();
    std::vector<WordEntry> entries;
    for (unsigned i = 0; i < k; ++i) entries.push_back({i * 2, 0, i + 10});
    auto before = e.counters(s).cas;
    auto d = e.make_descriptor(s, std::span<const WordEntry>(entries));
    ASSERT_TRUE(e.execute(s, d));
    EXPECT_EQ(e.counters(s).cas - before, k + 1) << "k=" << k;
  }
}

TEST(Mcas, FailedBudgetAtMostAcquisitionsPlusOne) {
  std::vector<Value> init{0, 0, 3, 0};
  VolatileMcas<> e(small_config(), init);
  auto s = e.register_thread();
  auto before = e.counters(s).cas;
  auto d = e.make_descriptor(s, {{0, 0, 1}, {1, 0, 1}, {2, 0, 1}, {3, 0, 1}});
  ASSERT_FALSE(e.execute(s, d));
  // two words acquired before the mismatch at word 2, then the status CAS
  EXPECT_EQ(e.counters(s).cas - before, 3u);
}

TEST(Mcas, ChainedOperationsMatchSequentialOracle) {
  VolatileMcas<> e(small_config());
  auto s = e.register_thread();
  verify::SequentialState oracle(8);
  std::vector<verify::Operation> ops{
      verify::McasOp{{{0, 0, 3}, {4, 0, 8}}},
      verify::McasOp{{{0, 3, 4}, {4, 8, 9}}},
  };
  for (const auto& op : ops) {
    auto expected = verify::apply_in_place(oracle, op);
    EXPECT_EQ(verify::execute_operation(e, s, op), expected);
  }
  for (std::size_t a = 0; a < 8; ++a) EXPECT_EQ(e.read(s, a), oracle.at(a));
}

TEST(Mcas, RandomSingleThreadedRunMatchesOracle) {
  VolatileMcas<> e(small_config(6));
  auto s = e.register_thread();
  verify::SequentialState oracle(6);
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<std::size_t> addr(0, 5);
  std::uniform_int_distribution<Value> val(0, 3);
  for (int i = 0; i < 5000; ++i) {
    verify::Operation op;
    if (rng() % 3 == 0) {
      op = verify::ReadOp{addr(rng)};
    } else {
      verify::McasOp m;
      auto k = 1 + rng() % 3;
      while (m.entries.size() < k) {
        auto a = addr(rng);
        bool dup = false;
        for (auto& x : m.entries) dup = dup || x.address == a;
        if (!dup) m.entries.push_back({a, val(rng), val(rng)});
      }
      op = m;
    }
    auto expected = verify::apply_in_place(oracle, op);
    ASSERT_EQ(verify::execute_operation(e, s, op), expected) << "op " << i;
  }
}

TEST(Read, FreshWord) {
  std::vector<Value> init{42};
  VolatileMcas<> e(small_config(), init);
  auto s = e.register_thread();
  EXPECT_EQ(e.read(s, 0), 42u);
}

TEST(Read, DoesNotWriteInCommonCase) {
  std::vector<Value> init{5};
  auto cfg = small_config();
  cfg.reclamation.read_assist_probability = 0;
  VolatileMcas<> e(cfg, init);
  auto s = e.register_thread();
  auto d = e.make_descriptor(s, {{0, 5, 6}});
  ASSERT_TRUE(e.execute(s, d));
  auto c = e.counters(s);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(e.read(s, 0), 6u);
  EXPECT_EQ(e.counters(s).cas, c.cas);
  EXPECT_EQ(e.counters(s).detach_cas, c.detach_cas);
  EXPECT_EQ(e.raw_word(0), e.handle_word(d, 0));
}

TEST(Execute, RejectsResubmission) {
  VolatileMcas<> e(small_config());
  auto s = e.register_thread();
  auto d = e.make_descriptor(s, {{0, 0, 1}});
  e.execute(s, d);
  EXPECT_THROW(e.execute(s, d), ContractError);
}

TEST(Helping, ReaderCompletesParkedOperation) {
  std::vector<Value> init{1, 2};
  VolatileMcas<> e(small_config(), init);
  std::vector<verify::Program> programs{
      {verify::McasOp{{{0, 1, 10}, {1, 2, 20}}}},
      {verify::ReadOp{0}},
  };
  // thread 0 acquires word 0 and stops right before acquiring word 1
  auto h = verify::replay_schedule(e, programs, verify::parse_script("0 until cas 1\n1 finish\n"));
  auto ops = verify::pair_operations(h);
  ASSERT_EQ(ops.size(), 2u);
  for (const auto& op : ops) {
    if (std::holds_alternative<verify::McasOp>(op.op)) {
      EXPECT_EQ(*op.result, 1u);
    } else {
      EXPECT_EQ(*op.result, 10u);
    }
  }
  EXPECT_EQ(e.counters(ThreadSlot{1}).helps, 1u);
  EXPECT_EQ(e.peek(0), 10u);
}

TEST(Concurrency, CounterIncrementsAreNotLost) {
  auto cfg = small_config(4, 4);
  cfg.reclamation.retire_threshold = 8;
  VolatileMcas<> e(cfg);
  constexpr int kPerThread = 3000;
  std::vector<std::thread> ts;
  std::vector<int> wins(4, 0);
  for (unsigned t = 0; t < 4; ++t) {
    ts.emplace_back([&, t] {
      auto s = e.register_thread();
      while (wins[t] < kPerThread) {
        auto a = e.read(s, 0);
        auto b = e.read(s, 3);
        auto d = e.make_descriptor(s, {{0, a, a + 1}, {3, b, b + 1}});
        if (e.execute(s, d)) ++wins[t];
      }
    });
  }
  for (auto& t : ts) t.join();
  auto s = ThreadSlot{0};
  EXPECT_EQ(e.read(s, 0), 4u * kPerThread);
  EXPECT_EQ(e.read(s, 3), 4u * kPerThread);
  e.drain();
  EXPECT_EQ(e.arena_handles(), 0u);
}
