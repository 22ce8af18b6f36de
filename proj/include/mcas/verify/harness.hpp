#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <random>
#include <thread>
#include <vector>

#include "mcas/reclamation.hpp"
#include "mcas/verify/history.hpp"
#include "mcas/verify/scheduler.hpp"
#include "mcas/verify/script.hpp"
#include "mcas/verify/sequential.hpp"

namespace mcas::verify {

/// Runs `op` against any engine with the read/make_descriptor/execute API.
template <class Engine>
OpResult execute_operation(Engine& engine, ThreadSlot s, const Operation& op) {
  if (const auto* r = std::get_if<ReadOp>(&op)) return engine.read(s, r->address);
  const auto& m = std::get<McasOp>(op);
  auto d = engine.make_descriptor(s, std::span<const WordEntry>(m.entries));
  return engine.execute(s, d) ? 1 : 0;
}

using Program = std::vector<Operation>;

/// Executes one fixed program per thread under the exact interleaving of
/// `script` and returns the recorded history.
template <class Engine>
History replay_schedule(Engine& engine, const std::vector<Program>& programs, const Script& script) {
  const auto n = static_cast<unsigned>(programs.size());
  std::vector<ThreadSlot> slots;
  for (unsigned t = 0; t < n; ++t) slots.push_back(engine.register_thread());
  std::size_t longest = 0;
  for (const auto& p : programs) longest = std::max(longest, p.size());
  HistoryRecorder recorder(n, 2 * longest + 2);

  std::vector<ControlledScheduler::Body> bodies;
  for (unsigned t = 0; t < n; ++t) {
    bodies.push_back([&, t](unsigned) {
      for (const auto& op : programs[t]) {
        recorder.invoke(t, op);
        auto r = execute_operation(engine, slots[t], op);
        recorder.respond(t, op, r);
      }
    });
  }
  ControlledScheduler sched(std::move(bodies));
  auto* previous = engine.memory().step_hook();
  engine.memory().set_step_hook(&sched);
  try {
    sched.start();
    run_script(sched, script, engine.layout().arena_base());
    sched.join();
  } catch (...) {
    sched.abort();
    engine.memory().set_step_hook(previous);
    throw;
  }
  engine.memory().set_step_hook(previous);
  return recorder.merge();
}

/// Random read-modify-write workload: reads, or k-word MCAS operations
/// whose expected values come from reads just issued by the same thread
/// and whose new values are old+1.
struct WorkloadSpec {
  std::size_t arena_words = 6;
  unsigned max_k = 3;
  unsigned read_pct = 30;
  std::size_t ops_per_thread = 50;
  std::uint64_t seed = 1;
};

/// Per-thread seed derivation (splitmix64 finalizer).
inline std::uint64_t thread_seed(std::uint64_t seed, unsigned tid) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (tid + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Number of history events one worker of `spec` can produce.
inline std::size_t workload_events(const WorkloadSpec& spec) {
  return 2 * (spec.ops_per_thread + spec.max_k + 1);
}

template <class Engine>
void rmw_worker(Engine& engine, ThreadSlot s, unsigned tid, HistoryRecorder& recorder,
                const WorkloadSpec& spec) {
  std::mt19937_64 rng(thread_seed(spec.seed, tid));
  const unsigned max_k = static_cast<unsigned>(std::min<std::size_t>(spec.max_k, spec.arena_words));
  std::uniform_int_distribution<std::size_t> addr(0, spec.arena_words - 1);
  std::uniform_int_distribution<unsigned> pct(0, 99);
  std::uniform_int_distribution<unsigned> width(1, std::max(1u, max_k));
  std::vector<std::size_t> targets;
  std::size_t done = 0;
  auto run = [&](const Operation& op) {
    recorder.invoke(tid, op);
    auto r = execute_operation(engine, s, op);
    recorder.respond(tid, op, r);
    ++done;
    return r;
  };
  while (done < spec.ops_per_thread) {
    if (pct(rng) < spec.read_pct) {
      run(ReadOp{addr(rng)});
      continue;
    }
    const auto k = width(rng);
    targets.clear();
    while (targets.size() < k) {
      auto a = addr(rng);
      if (std::find(targets.begin(), targets.end(), a) == targets.end()) targets.push_back(a);
    }
    McasOp m;
    for (auto a : targets) {
      auto v = run(ReadOp{a});
      m.entries.push_back(WordEntry{a, v, v + 1});
    }
    run(m);
  }
}

/// Free-running stress history on real threads. Random yields before
/// memory accesses vary the interleaving.
template <class Engine>
History stress_history(Engine& engine, unsigned threads, const WorkloadSpec& spec,
                       double yield_probability) {
  std::vector<ThreadSlot> slots;
  for (unsigned t = 0; t < threads; ++t) slots.push_back(engine.register_thread());
  HistoryRecorder recorder(threads, workload_events(spec));
  ChaosYield chaos(yield_probability, spec.seed);
  auto* previous = engine.memory().step_hook();
  engine.memory().set_step_hook(&chaos);
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(threads);
  for (unsigned t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      try {
        rmw_worker(engine, slots[t], t, recorder, spec);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  engine.memory().set_step_hook(previous);
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return recorder.merge();
}

/// Same workload as `stress_history`, but every memory access is a
/// scheduling point picked by a seeded random scheduler, so the
/// interleaving is fine-grained and reproducible on any core count.
template <class Engine>
History scheduled_history(Engine& engine, unsigned threads, const WorkloadSpec& spec,
                          std::uint64_t schedule_seed) {
  std::vector<ThreadSlot> slots;
  for (unsigned t = 0; t < threads; ++t) slots.push_back(engine.register_thread());
  HistoryRecorder recorder(threads, workload_events(spec));
  std::vector<ControlledScheduler::Body> bodies;
  for (unsigned t = 0; t < threads; ++t) {
    bodies.push_back([&, t](unsigned) { rmw_worker(engine, slots[t], t, recorder, spec); });
  }
  ControlledScheduler sched(std::move(bodies));
  auto* previous = engine.memory().step_hook();
  engine.memory().set_step_hook(&sched);
  std::mt19937_64 rng(schedule_seed);
  try {
    sched.start();
    sched.run_random(rng);
    sched.join();
  } catch (...) {
    sched.abort();
    engine.memory().set_step_hook(previous);
    throw;
  }
  engine.memory().set_step_hook(previous);
  return recorder.merge();
}

}  // namespace mcas::verify
