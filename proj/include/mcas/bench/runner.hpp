#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mcas/bench/config.hpp"
#include "mcas/bench/dll.hpp"
#include "mcas/core.hpp"
#include "mcas/harris.hpp"
#include "mcas/persistent.hpp"
#include "mcas/verify/harness.hpp"

namespace mcas::bench {

struct RunOutcome {
  BenchMetrics metrics;
  ThreadCounters counters;
  /// Empty when the post-run list audit passed (or for the array benchmark).
  std::string audit_failure;
  std::size_t final_size = 0;
};

inline McasConfig engine_config(const BenchConfig& cfg, std::size_t arena_words, unsigned max_width) {
  McasConfig m;
  m.arena_words = arena_words;
  m.max_width = max_width;
  m.descriptors_per_thread = std::max<std::size_t>(1024, 16 * cfg.retire_threshold);
  m.reclamation.max_threads = cfg.threads;
  m.reclamation.retire_threshold = cfg.retire_threshold;
  m.reclamation.read_assist_probability = cfg.read_assist_probability;
  m.reclamation.seed = cfg.seed;
  return m;
}

/// Builds the engine selected by `cfg` and passes it to `f`.
template <class F>
decltype(auto) with_engine(const BenchConfig& cfg, std::size_t arena_words, unsigned max_width, F&& f) {
  validate(cfg);
  auto m = engine_config(cfg, arena_words, max_width);
  if (cfg.algo == Algo::harris) {
    HarrisMcas<> engine(m);
    return f(engine);
  }
  if (cfg.persistent) {
    PersistentMcas<> engine(m);
    return f(engine);
  }
  VolatileMcas<> engine(m);
  return f(engine);
}

namespace detail {

/// Runs `op(tid, slot, rng)` in a loop on every thread, either for the
/// configured duration or for a fixed count per thread. Returns the total
/// number of operations and the elapsed seconds.
template <class Engine, class Op>
std::pair<std::uint64_t, double> drive(Engine&, const BenchConfig& cfg, const std::vector<ThreadSlot>& slots,
                                       std::uint64_t seed, bool& truncated, Op&& op) {
  std::atomic<bool> go{false};
  std::atomic<bool> stop{false};
  std::atomic<unsigned> ready{0};
  std::vector<std::uint64_t> counts(cfg.threads, 0);
  std::vector<std::exception_ptr> errors(cfg.threads);
  std::atomic<bool> ran_out{false};
  std::vector<std::thread> workers;
  for (unsigned t = 0; t < cfg.threads; ++t) {
    workers.emplace_back([&, t] {
      std::mt19937_64 rng(verify::thread_seed(seed, t));
      ready.fetch_add(1);
      while (!go.load()) std::this_thread::yield();
      std::uint64_t n = 0;
      try {
        if (cfg.ops_per_thread) {
          for (; n < *cfg.ops_per_thread && !stop.load(std::memory_order_relaxed); ++n) op(t, slots[t], rng);
        } else {
          for (; !stop.load(std::memory_order_relaxed); ++n) op(t, slots[t], rng);
        }
      } catch (const CapacityError&) {
        ran_out.store(true);
        stop.store(true);
      } catch (...) {
        errors[t] = std::current_exception();
        stop.store(true);
      }
      counts[t] = n;
    });
  }
  while (ready.load() < cfg.threads) std::this_thread::yield();
  const auto start = std::chrono::steady_clock::now();
  go.store(true);
  if (!cfg.ops_per_thread) {
    const auto deadline = start + std::chrono::duration<double>(cfg.duration_seconds);
    while (!stop.load() && std::chrono::steady_clock::now() < deadline) {
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    stop.store(true);
  }
  for (auto& w : workers) w.join();
  const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  truncated = ran_out.load();
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  return {total, elapsed};
}

}  // namespace detail

/// Array benchmark: each operation picks k distinct random indices, reads
/// them in ascending order and tries to bump all of them by one with a
/// single k-word MCAS. With probability readPct it only reads.
template <class Engine>
RunOutcome run_array(Engine& engine, const BenchConfig& cfg, std::uint64_t seed) {
  std::vector<ThreadSlot> slots;
  for (unsigned t = 0; t < cfg.threads; ++t) slots.push_back(engine.register_thread());
  const auto before = engine.total_counters();
  std::vector<std::vector<std::size_t>> idx(cfg.threads);
  std::vector<std::vector<WordEntry>> entries(cfg.threads);
  bool truncated = false;
  auto [ops, secs] = detail::drive(engine, cfg, slots, seed, truncated,
                                   [&](unsigned t, ThreadSlot s, std::mt19937_64& rng) {
    auto& ix = idx[t];
    auto& en = entries[t];
    ix.clear();
    std::uniform_int_distribution<std::size_t> pick(0, cfg.size - 1);
    while (ix.size() < cfg.k) {
      auto a = pick(rng);
      if (std::find(ix.begin(), ix.end(), a) == ix.end()) ix.push_back(a);
    }
    std::sort(ix.begin(), ix.end());
    const bool read_only =
        cfg.read_pct > 0 && std::uniform_int_distribution<unsigned>(0, 99)(rng) < cfg.read_pct;
    en.clear();
    for (auto a : ix) {
      auto v = engine.read(s, a);
      en.push_back(WordEntry{a, v, v + 1});
    }
    if (read_only) return;
    auto d = engine.make_descriptor(s, std::span<const WordEntry>(en));
    engine.execute(s, d);
  });
  RunOutcome out;
  out.counters = counter_delta(engine.total_counters(), before);
  out.metrics = compute_metrics(out.counters, ops, secs);
  out.metrics.truncated = truncated;
  return out;
}

inline std::size_t default_dll_capacity(const BenchConfig& cfg) {
  if (cfg.dll_capacity != 0) return cfg.dll_capacity;
  return cfg.persistent ? (std::size_t{1} << 17) : (std::size_t{1} << 21);
}

/// List benchmark: the set starts with keyRange/2 random keys; each
/// operation is a search with probability readPct, otherwise an insert or
/// a delete with equal odds, on a uniform key. The structure is audited
/// after the workers stop.
template <class Engine>
RunOutcome run_dll(Engine& engine, const BenchConfig& cfg, std::uint64_t seed) {
  std::vector<ThreadSlot> slots;
  for (unsigned t = 0; t < cfg.threads; ++t) slots.push_back(engine.register_thread());
  const auto capacity = engine.arena_words() / DoublyLinkedSet<Engine>::kWordsPerNode;
  DoublyLinkedSet<Engine> set(engine, slots[0], capacity, cfg.threads);
  {
    std::mt19937_64 rng(verify::thread_seed(seed, 0xd11));
    std::uniform_int_distribution<std::uint64_t> key(0, cfg.size - 1);
    std::size_t present = 0;
    while (present < cfg.size / 2) {
      if (set.insert(slots[0], key(rng))) ++present;
    }
  }
  engine.drain();
  const auto before = engine.total_counters();
  bool truncated = false;
  auto [ops, secs] = detail::drive(engine, cfg, slots, seed, truncated,
                                   [&](unsigned, ThreadSlot s, std::mt19937_64& rng) {
    const auto k = std::uniform_int_distribution<std::uint64_t>(0, cfg.size - 1)(rng);
    const auto dice = std::uniform_int_distribution<unsigned>(0, 199)(rng);
    if (dice < 2 * cfg.read_pct) {
      set.contains(s, k);
    } else if (dice % 2 == 0) {
      set.insert(s, k);
    } else {
      set.remove(s, k);
    }
  });
  RunOutcome out;
  out.counters = counter_delta(engine.total_counters(), before);
  out.metrics = compute_metrics(out.counters, ops, secs);
  out.metrics.truncated = truncated;
  auto audit = set.audit();
  if (!audit.ok) out.audit_failure = audit.problem;
  out.final_size = audit.size;
  return out;
}

/// One run of the configured benchmark with its own fresh engine.
inline RunOutcome run_once(const BenchConfig& cfg, unsigned repeat = 0) {
  validate(cfg);
  const auto seed = cfg.seed + repeat;
  if (cfg.benchmark == Benchmark::array) {
    return with_engine(cfg, cfg.size, cfg.k, [&](auto& engine) { return run_array(engine, cfg, seed); });
  }
  const auto words = DoublyLinkedSet<VolatileMcas<>>::kWordsPerNode * default_dll_capacity(cfg);
  return with_engine(cfg, words, 3, [&](auto& engine) { return run_dll(engine, cfg, seed); });
}

/// Field-wise median of repeated runs (upper median for even counts).
inline BenchMetrics median_metrics(std::vector<BenchMetrics> runs) {
  if (runs.empty()) return {};
  auto med = [&](auto field) {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(r.*field);
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  BenchMetrics m;
  m.throughput = med(&BenchMetrics::throughput);
  m.helping_ratio = med(&BenchMetrics::helping_ratio);
  m.detaching_ratio = med(&BenchMetrics::detaching_ratio);
  m.cas_per_op = med(&BenchMetrics::cas_per_op);
  m.fence_per_op = med(&BenchMetrics::fence_per_op);
  m.success_rate = med(&BenchMetrics::success_rate);
  m.seconds = med(&BenchMetrics::seconds);
  for (const auto& r : runs) {
    m.operations += r.operations;
    m.mcas_calls += r.mcas_calls;
    m.truncated = m.truncated || r.truncated;
  }
  return m;
}

}  // namespace mcas::bench
