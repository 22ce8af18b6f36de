#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>
#include <thread>
#include <vector>

#include "mcas/core.hpp"
#include "mcas/reclamation.hpp"
#include "mcas/verify/harness.hpp"

using namespace mcas;

namespace {

/// Minimal reclaimer client that records what happens to each descriptor.
struct FakeClient {
  std::set<std::uint32_t> finalized;
  std::vector<std::uint32_t> detached;
  std::vector<std::uint32_t> reclaimed;
  std::size_t fences = 0;
  ThreadCounters c[4];

  bool is_finalized(DescriptorRef d) const { return finalized.count(d.index) != 0; }
  std::size_t detach(ThreadSlot, DescriptorRef d) {
    detached.push_back(d.index);
    return 0;
  }
  void before_reclaim(ThreadSlot) { ++fences; }
  void reclaim(ThreadSlot, DescriptorRef d) { reclaimed.push_back(d.index); }
  ThreadCounters& counters(ThreadSlot s) { return c[s.id]; }
};

ReclamationConfig rcfg(unsigned threads = 4, std::size_t threshold = 32) {
  ReclamationConfig c;
  c.max_threads = threads;
  c.retire_threshold = threshold;
  return c;
}

bool contains(const std::vector<std::uint32_t>& v, std::uint32_t x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

}  // namespace

TEST(Registration, FirstSlotIsZeroWithEvenEpoch) {
  FakeClient fc;
  Reclaimer<FakeClient> r(fc, rcfg());
  auto s = r.register_thread();
  EXPECT_EQ(s.id, 0u);
  EXPECT_EQ(r.epoch(s), 0u);
  EXPECT_EQ(r.finalized_count(s), 0u);
  EXPECT_EQ(r.detached_count(s), 0u);
}

TEST(Registration, SlotsAreDistinctAndBounded) {
  FakeClient fc;
  Reclaimer<FakeClient> r(fc, rcfg(2));
  auto a = r.register_thread();
  auto b = r.register_thread();
  EXPECT_NE(a.id, b.id);
  EXPECT_THROW(r.register_thread(), CapacityError);
}

TEST(Epochs, ParityContract) {
  FakeClient fc;
  Reclaimer<FakeClient> r(fc, rcfg());
  auto s = r.register_thread();
  r.epoch_enter(s);
  EXPECT_EQ(r.epoch(s), 1u);
  EXPECT_THROW(r.epoch_enter(s), ContractError);
  r.epoch_exit(s);
  EXPECT_EQ(r.epoch(s), 2u);
  EXPECT_THROW(r.epoch_exit(s), ContractError);
}

TEST(Epochs, TenPairsGiveTwenty) {
  FakeClient fc;
  Reclaimer<FakeClient> r(fc, rcfg());
  auto s = r.register_thread();
  for (int i = 0; i < 10; ++i) {
    r.epoch_enter(s);
    r.epoch_exit(s);
  }
  EXPECT_EQ(r.epoch(s), 20u);
}

TEST(Retire, BelowThresholdDoesNotScan) {
  FakeClient fc;
  Reclaimer<FakeClient> r(fc, rcfg());
  auto s = r.register_thread();
  fc.finalized.insert(0);
  r.retire_for_cleanup(s, DescriptorRef{0});
  EXPECT_EQ(r.finalized_count(s), 1u);
  EXPECT_EQ(fc.c[0].scans, 0u);
}

TEST(Retire, ThresholdTriggersScan) {
  FakeClient fc;
  Reclaimer<FakeClient> r(fc, rcfg());
  auto s = r.register_thread();
  for (std::uint32_t i = 0; i < 31; ++i) {
    fc.finalized.insert(i);
    r.retire_for_cleanup(s, DescriptorRef{i});
  }
  EXPECT_EQ(fc.c[0].scans, 0u);
  fc.finalized.insert(31);
  r.retire_for_cleanup(s, DescriptorRef{31});
  EXPECT_EQ(fc.c[0].scans, 1u);
}

TEST(Retire, ActiveDescriptorIsRejected) {
  FakeClient fc;
  Reclaimer<FakeClient> r(fc, rcfg());
  auto s = r.register_thread();
  EXPECT_THROW(r.retire_for_cleanup(s, DescriptorRef{3}), ContractError);
}

TEST(Scan, IdlePeersLetDescriptorsMoveThrough) {
  FakeClient fc;
  Reclaimer<FakeClient> r(fc, rcfg());
  auto s = r.register_thread();
  r.register_thread();
  r.register_thread();
  fc.finalized.insert(7);
  r.retire_for_cleanup(s, DescriptorRef{7});
  EXPECT_TRUE(r.quiescence_scan(s));
  EXPECT_TRUE(fc.detached.empty());
  EXPECT_TRUE(r.quiescence_scan(s));
  EXPECT_TRUE(contains(fc.detached, 7));
  EXPECT_EQ(r.finalized_count(s), 0u);
  EXPECT_EQ(r.detached_count(s), 1u);
}

TEST(Scan, ReclaimWaitsTwoGenerationsAfterDetach) {
  FakeClient fc;
  Reclaimer<FakeClient> r(fc, rcfg());
  auto s = r.register_thread();
  r.register_thread();
  fc.finalized.insert(1);
  r.retire_for_cleanup(s, DescriptorRef{1});
  for (int scan = 1; scan <= 3; ++scan) {
    ASSERT_TRUE(r.quiescence_scan(s));
    EXPECT_TRUE(fc.reclaimed.empty()) << "scan " << scan;
  }
  ASSERT_TRUE(r.quiescence_scan(s));
  EXPECT_TRUE(contains(fc.reclaimed, 1));
  EXPECT_EQ(fc.fences, 1u);
  EXPECT_EQ(r.detached_count(s), 0u);
}

TEST(Scan, PinnedPeerBlocksProgress) {
  FakeClient fc;
  Reclaimer<FakeClient> r(fc, rcfg());
  auto s = r.register_thread();
  auto peer = r.register_thread();
  for (int i = 0; i < 3; ++i) {
    r.epoch_enter(peer);
    r.epoch_exit(peer);
  }
  r.epoch_enter(peer);
  ASSERT_EQ(r.epoch(peer), 7u);
  fc.finalized.insert(4);
  r.retire_for_cleanup(s, DescriptorRef{4});
  EXPECT_FALSE(r.quiescence_scan(s));
  EXPECT_FALSE(r.quiescence_scan(s));
  EXPECT_TRUE(fc.detached.empty());
  EXPECT_TRUE(fc.reclaimed.empty());

  r.epoch_exit(peer);
  r.epoch_enter(peer);
  ASSERT_EQ(r.epoch(peer), 9u);
  EXPECT_TRUE(r.quiescence_scan(s));
}

TEST(Scan, DrainEmptiesEverything) {
  FakeClient fc;
  Reclaimer<FakeClient> r(fc, rcfg(2, 4));
  auto a = r.register_thread();
  auto b = r.register_thread();
  for (std::uint32_t i = 0; i < 10; ++i) {
    fc.finalized.insert(i);
    r.retire_for_cleanup(i % 2 ? a : b, DescriptorRef{i});
  }
  r.drain();
  EXPECT_EQ(fc.reclaimed.size(), 10u);
  EXPECT_EQ(r.finalized_count(a) + r.finalized_count(b) + r.detached_count(a) + r.detached_count(b), 0u);
}

namespace {

McasConfig ecfg(double assist = 0) {
  McasConfig c;
  c.arena_words = 8;
  c.max_width = 4;
  c.descriptors_per_thread = 64;
  c.reclamation.max_threads = 4;
  c.reclamation.read_assist_probability = assist;
  return c;
}

}  // namespace

TEST(Detach, SuccessfulDescriptorWithAllHandles) {
  VolatileMcas<> e(ecfg());
  auto s = e.register_thread();
  auto d = e.make_descriptor(s, {{0, 0, 1}, {1, 0, 2}, {2, 0, 3}});
  ASSERT_TRUE(e.execute(s, d));
  EXPECT_EQ(e.arena_references(d), 3u);
  EXPECT_EQ(e.detach(s, d), 3u);
  EXPECT_EQ(e.raw_word(0), encode_word(Value{1}));
  EXPECT_EQ(e.raw_word(1), encode_word(Value{2}));
  EXPECT_EQ(e.raw_word(2), encode_word(Value{3}));
  EXPECT_EQ(e.arena_references(d), 0u);
}

TEST(Detach, ReacquiredWordsNeedNoCas) {
  VolatileMcas<> e(ecfg());
  auto s = e.register_thread();
  auto d = e.make_descriptor(s, {{0, 0, 1}, {1, 0, 2}, {2, 0, 3}});
  ASSERT_TRUE(e.execute(s, d));
  auto d2 = e.make_descriptor(s, {{0, 1, 4}, {1, 2, 5}, {2, 3, 6}});
  ASSERT_TRUE(e.execute(s, d2));
  EXPECT_EQ(e.detach(s, d), 0u);
  EXPECT_EQ(e.read(s, 1), 5u);
}

TEST(Detach, FailedDescriptorRestoresOld) {
  std::vector<Value> init{0, 0, 9};
  VolatileMcas<> e(ecfg(), init);
  auto s = e.register_thread();
  auto d = e.make_descriptor(s, {{0, 0, 1}, {2, 0, 1}});
  ASSERT_FALSE(e.execute(s, d));
  ASSERT_EQ(e.arena_references(d), 1u);
  EXPECT_EQ(e.detach(s, d), 1u);
  EXPECT_EQ(e.raw_word(0), encode_word(Value{0}));
}

TEST(Detach, RejectsActiveDescriptor) {
  VolatileMcas<> e(ecfg());
  auto s = e.register_thread();
  auto d = e.make_descriptor(s, {{0, 0, 1}});
  EXPECT_THROW(e.detach(s, d), ContractError);
}

TEST(ReaderAssist, ZeroProbabilityNeverWrites) {
  VolatileMcas<> e(ecfg(0));
  auto s = e.register_thread();
  auto d = e.make_descriptor(s, {{0, 0, 1}});
  ASSERT_TRUE(e.execute(s, d));
  e.reclamation().epoch_enter(s);
  EXPECT_FALSE(e.reader_assisted_detach(s, 0, d));
  e.reclamation().epoch_exit(s);
  EXPECT_EQ(e.raw_word(0), e.handle_word(d, 0));
}

TEST(ReaderAssist, QuiescentReadDetaches) {
  VolatileMcas<> e(ecfg(1.0));
  auto s = e.register_thread();
  e.register_thread();
  auto d = e.make_descriptor(s, {{0, 0, 1}, {1, 0, 2}});
  ASSERT_TRUE(e.execute(s, d));
  EXPECT_EQ(e.read(s, 1), 2u);
  EXPECT_EQ(e.raw_word(1), encode_word(Value{2}));
  EXPECT_EQ(e.raw_word(0), e.handle_word(d, 0));
  EXPECT_EQ(e.counters(s).detach_cas, 1u);
}

TEST(ReaderAssist, LosesToConcurrentReacquisition) {
  VolatileMcas<> e(ecfg(1.0));
  auto setup = e.register_thread();
  auto d = e.make_descriptor(setup, {{0, 0, 1}});
  ASSERT_TRUE(e.execute(setup, d));
  std::vector<verify::Program> programs{
      {verify::ReadOp{0}},
      {verify::McasOp{{{0, 1, 7}}}},
  };
  // thread 0 stops right before its detach CAS, thread 1 installs its own
  // handle, then thread 0 resumes
  auto h = verify::replay_schedule(e, programs, verify::parse_script("0 until cas 0\n1 finish\n0 finish\n"));
  auto ops = verify::pair_operations(h);
  ASSERT_EQ(ops.size(), 2u);
  EXPECT_EQ(e.counters(ThreadSlot{1}).detach_cas, 1u);
  EXPECT_TRUE(is_descriptor(e.raw_word(0)));
  EXPECT_NE(e.raw_word(0), e.handle_word(d, 0));
  EXPECT_EQ(e.peek(0), 7u);
}

TEST(Reclamation, StaleReadersNeverSeePoison) {
  auto cfg = ecfg(1.0 / 16);
  cfg.arena_words = 4;
  cfg.descriptors_per_thread = 16;
  cfg.reclamation.retire_threshold = 2;
  cfg.reclamation.poison_reclaimed = true;
  VolatileMcas<> e(cfg);
  std::vector<std::thread> ts;
  for (unsigned t = 0; t < 4; ++t) {
    ts.emplace_back([&, t] {
      auto s = e.register_thread();
      std::mt19937_64 rng(t);
      for (int i = 0; i < 4000; ++i) {
        auto a = rng() % 4, b = (a + 1 + rng() % 3) % 4;
        auto va = e.read(s, a), vb = e.read(s, b);
        auto d = e.make_descriptor(s, {{a, va, va + 1}, {b, vb, vb + 1}});
        e.execute(s, d);
      }
    });
  }
  for (auto& t : ts) t.join();
  auto total = e.total_counters();
  EXPECT_EQ(total.poison_observed, 0u);
  EXPECT_GT(total.reclaimed, 0u);
  e.drain();
  EXPECT_EQ(e.arena_handles(), 0u);
}
