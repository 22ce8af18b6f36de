#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mcas/persistent.hpp"
#include "mcas/sim_pmem.hpp"
#include "mcas/verify/harness.hpp"
#include "mcas/verify/invariants.hpp"
#include "mcas/verify/linearizability.hpp"
#include "mcas/verify/scheduler.hpp"

namespace mcas::verify {

struct CrashTrialConfig {
  unsigned threads = 3;
  std::size_t arena_words = 6;
  unsigned max_k = 3;
  unsigned read_pct = 30;
  std::size_t ops_per_thread = 10;
  /// Chance, after each scheduler step, that a recently touched word is
  /// written back to persistent memory unasked.
  double writeback_probability = 0.3;
  /// Interrupt the first recovery with a second crash.
  bool crash_in_recovery = false;
  /// Small pools and thresholds so that descriptors get recycled within a
  /// short run.
  std::size_t descriptors_per_thread = 24;
  std::size_t retire_threshold = 4;
  std::uint64_t seed = 1;
};

struct CrashTrialResult {
  std::size_t schedule_steps = 0;  // length of the same schedule without a crash
  std::size_t crash_step = 0;
  bool crashed_in_recovery = false;
  std::size_t recovery_steps = 0;
  std::size_t recovery_crash_step = 0;
  std::size_t pending_at_crash = 0;

  History history;
  SequentialState initial;
  SequentialState recovered;
  CheckResult verdict;
  RecoveryStats stats;
  InvariantReport invariants;

  bool idempotent = false;       // recover(recover(image)) == recover(image)
  bool converged = true;         // nested-crash recovery matches direct recovery
  bool handles_left = false;     // any arena word still holding a handle
  std::string error;             // unexpected exception text

  bool ok() const {
    return error.empty() && verdict.ok() && idempotent && converged && !handles_left &&
           invariants.clean();
  }
};

namespace detail {

/// Step hook for single-threaded recovery runs: occasional writebacks of
/// the previously accessed word, and an optional crash at a given access.
class RecoveryChaos final : public StepHook {
 public:
  RecoveryChaos(SimMemory& mem, std::uint64_t seed, double writeback, std::optional<std::size_t> crash_at)
      : mem_(mem), rng_(seed), writeback_(writeback), crash_at_(crash_at) {}

  void before(MemOp, std::size_t address) override {
    if (crash_at_ && seen_ == *crash_at_) {
      ++seen_;
      image_ = mem_.crash();
      throw CrashSignal{};
    }
    ++seen_;
    if (have_last_ && std::uniform_real_distribution<double>(0, 1)(rng_) < writeback_) {
      mem_.spontaneous_writeback(last_);
    }
    last_ = address;
    have_last_ = true;
  }

  std::size_t seen() const noexcept { return seen_; }
  const std::optional<CrashImage>& image() const noexcept { return image_; }

 private:
  SimMemory& mem_;
  std::mt19937_64 rng_;
  double writeback_;
  std::optional<std::size_t> crash_at_;
  std::size_t seen_ = 0;
  std::size_t last_ = 0;
  bool have_last_ = false;
  std::optional<CrashImage> image_;
};

struct ScheduleOutcome {
  std::size_t steps = 0;
  std::optional<CrashImage> image;
  History history;
  InvariantReport invariants;
};

inline McasConfig crash_engine_config(const CrashTrialConfig& cfg) {
  McasConfig m;
  m.arena_words = cfg.arena_words;
  m.max_width = cfg.max_k;
  m.descriptors_per_thread = cfg.descriptors_per_thread;
  m.reclamation.max_threads = cfg.threads;
  m.reclamation.retire_threshold = cfg.retire_threshold;
  m.reclamation.seed = cfg.seed;
  return m;
}

/// Runs the trial's workload under a seeded random schedule, crashing
/// after `crash_at` steps if given.
inline ScheduleOutcome run_schedule(const CrashTrialConfig& cfg, const std::vector<Value>& initial,
                                    std::optional<std::size_t> crash_at) {
  RecordingHooks hooks(cfg.threads);
  PersistentMcas<RecordingHooks> engine(crash_engine_config(cfg), initial, hooks);
  WorkloadSpec spec{cfg.arena_words, cfg.max_k, cfg.read_pct, cfg.ops_per_thread, cfg.seed};
  std::vector<ThreadSlot> slots;
  for (unsigned t = 0; t < cfg.threads; ++t) slots.push_back(engine.register_thread());
  HistoryRecorder recorder(cfg.threads, workload_events(spec));

  std::vector<ControlledScheduler::Body> bodies;
  for (unsigned t = 0; t < cfg.threads; ++t) {
    bodies.push_back([&, t](unsigned) { rmw_worker(engine, slots[t], t, recorder, spec); });
  }
  ControlledScheduler sched(std::move(bodies));
  auto& mem = engine.memory();
  mem.set_step_hook(&sched);
  std::mt19937_64 rng(thread_seed(cfg.seed, 0xc0ffee));
  std::mt19937_64 wb_rng(thread_seed(cfg.seed, 0xbeef));
  std::uniform_real_distribution<double> coin(0, 1);
  const auto arena_base = engine.layout().arena_base();

  ScheduleOutcome out;
  sched.start();
  out.steps = sched.run_random(
      rng,
      [&](std::size_t, unsigned t) {
        if (coin(wb_rng) >= cfg.writeback_probability) return;
        // Alternate between the word the stepping thread touches next and
        // a random arena word.
        std::size_t target = arena_base + std::uniform_int_distribution<std::size_t>(
                                               0, cfg.arena_words - 1)(wb_rng);
        if (coin(wb_rng) < 0.5) {
          if (auto p = sched.pending(t); p && p->op != MemOp::fence && p->op != MemOp::pause) {
            target = p->address;
          }
        }
        mem.spontaneous_writeback(target);
      },
      crash_at);
  if (crash_at && !sched.all_finished()) {
    out.image = mem.crash();
    sched.abort();
  } else {
    sched.join();
    if (crash_at) out.image = mem.crash();
  }
  mem.set_step_hook(nullptr);
  out.history = recorder.merge();
  out.invariants = hooks.report(!crash_at.has_value());
  return out;
}

inline SequentialState arena_state(const SimMemory& mem, const PoolLayout& layout, bool& handles_left) {
  std::vector<Value> words(layout.arena_words);
  for (std::size_t a = 0; a < layout.arena_words; ++a) {
    TaggedWord w{mem.inspect(layout.arena_addr(a))};
    if (MarkBitCodec::is_descriptor(w)) {
      handles_left = true;
      words[a] = 0;
    } else {
      words[a] = MarkBitCodec::decode_value(w);
    }
  }
  return SequentialState(std::move(words));
}

}  // namespace detail

/// One crash-injection experiment: run a small concurrent workload over
/// simulated persistent memory, crash at a uniformly random step, recover
/// (optionally crashing once more inside recovery), and check durable
/// linearizability, recovery idempotence and the MCAS invariants.
inline CrashTrialResult run_crash_trial(const CrashTrialConfig& cfg) {
  CrashTrialResult res;
  try {
    std::mt19937_64 rng(thread_seed(cfg.seed, 0xfeed));
    std::vector<Value> initial(cfg.arena_words);
    for (auto& v : initial) v = std::uniform_int_distribution<Value>(0, 20)(rng);
    res.initial = SequentialState(initial);

    res.schedule_steps = detail::run_schedule(cfg, initial, std::nullopt).steps;
    res.crash_step = std::uniform_int_distribution<std::size_t>(0, res.schedule_steps)(rng);
    auto run = detail::run_schedule(cfg, initial, res.crash_step);
    res.history = std::move(run.history);
    res.invariants = std::move(run.invariants);
    const auto& image = *run.image;
    for (const auto& op : pair_operations(res.history)) {
      if (!op.complete()) ++res.pending_at_crash;
    }

    const auto layout = PoolLayout::from_meta(
        std::span<const std::uint64_t>(image.words.data(), std::min<std::size_t>(image.words.size(), 6)),
        image.words.size());
    std::unique_ptr<SimMemory> recovered;
    if (cfg.crash_in_recovery) {
      {
        SimMemory probe(image, 1);
        StepCounter counter;
        probe.set_step_hook(&counter);
        recover(probe);
        res.recovery_steps = counter.count();
      }
      res.recovery_crash_step =
          std::uniform_int_distribution<std::size_t>(0, res.recovery_steps - 1)(rng);
      SimMemory first(image, 1);
      detail::RecoveryChaos chaos(first, rng(), cfg.writeback_probability, res.recovery_crash_step);
      first.set_step_hook(&chaos);
      try {
        recover(first);
      } catch (const CrashSignal&) {
        res.crashed_in_recovery = true;
      }
      first.set_step_hook(nullptr);
      recovered = recover_image(res.crashed_in_recovery ? *chaos.image() : first.persistent_image(), 1,
                                &res.stats);
      auto direct = recover_image(image, 1);
      bool ignored = false;
      res.converged = detail::arena_state(*direct, layout, ignored) ==
                      detail::arena_state(*recovered, layout, ignored);
    } else {
      recovered = recover_image(image, 1, &res.stats);
    }

    res.recovered = detail::arena_state(*recovered, layout, res.handles_left);
    const auto once = recovered->persistent_image();
    auto again = recover_image(once, 1);
    res.idempotent = again->persistent_image() == once;
    res.verdict = check_durable(res.history, res.initial, res.recovered);
  } catch (const std::exception& e) {
    res.error = e.what();
  }
  return res;
}

}  // namespace mcas::verify
