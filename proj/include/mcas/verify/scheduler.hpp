#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mcas/memory.hpp"

namespace mcas::verify {

/// Thrown inside worker threads to unwind them after a simulated crash.
struct CrashSignal {};

class ScriptError : public std::runtime_error {
 public:
  explicit ScriptError(const std::string& what) : std::runtime_error(what) {}
};

struct PendingStep {
  MemOp op = MemOp::load;
  std::size_t address = 0;
  friend bool operator==(const PendingStep&, const PendingStep&) = default;
};

/// Runs one real thread per body but lets exactly one of them execute at
/// a time. Every shared-memory access of a worker is a scheduling point:
/// the worker parks right before it and resumes only when the controller
/// grants it a step. A step executes the parked access plus any local
/// computation up to the next access.
///
/// Memory accesses from threads that are not workers of this scheduler
/// (e.g. setup code on the controlling thread) pass through unchecked.
class ControlledScheduler final : public StepHook {
 public:
  using Body = std::function<void(unsigned)>;

  explicit ControlledScheduler(std::vector<Body> bodies)
      : bodies_(std::move(bodies)), slots_(bodies_.size()) {}

  ControlledScheduler(const ControlledScheduler&) = delete;
  ControlledScheduler& operator=(const ControlledScheduler&) = delete;

  ~ControlledScheduler() override { abort(); }

  unsigned threads() const noexcept { return static_cast<unsigned>(bodies_.size()); }

  /// Launches the workers and waits until each has parked at its first
  /// access or finished.
  void start() {
    if (started_) throw ScriptError("scheduler already started");
    started_ = true;
    for (unsigned t = 0; t < threads(); ++t) {
      workers_.emplace_back([this, t] { worker_main(t); });
    }
    std::unique_lock lk(mu_);
    cv_.wait(lk, [&] {
      for (const auto& s : slots_) {
        if (!s.done && s.parks == 0) return false;
      }
      return true;
    });
  }

  bool finished(unsigned t) const {
    std::lock_guard lk(mu_);
    return slot(t).done;
  }

  bool all_finished() const {
    std::lock_guard lk(mu_);
    for (const auto& s : slots_) {
      if (!s.done) return false;
    }
    return true;
  }

  std::optional<PendingStep> pending(unsigned t) const {
    std::lock_guard lk(mu_);
    const auto& s = slot(t);
    if (s.done) return std::nullopt;
    return s.pending;
  }

  std::vector<unsigned> runnable() const {
    std::lock_guard lk(mu_);
    std::vector<unsigned> out;
    for (unsigned t = 0; t < slots_.size(); ++t) {
      if (!slots_[t].done) out.push_back(t);
    }
    return out;
  }

  /// Lets thread `t` perform one step.
  void step(unsigned t) {
    std::unique_lock lk(mu_);
    if (!started_) throw ScriptError("scheduler not started");
    auto& s = slot(t);
    if (s.done) throw ScriptError("thread " + std::to_string(t) + " has already completed");
    const auto target = s.parks + 1;
    granted_ = static_cast<int>(t);
    cv_.notify_all();
    cv_.wait(lk, [&] { return s.done || s.parks >= target; });
    ++steps_;
  }

  void run_to_completion(unsigned t) {
    while (!finished(t)) step(t);
  }

  /// Steps uniformly random runnable threads. `between` runs after every
  /// step (with the step index). Stops when all threads finished or after
  /// `stop_after` steps. Returns the number of steps taken.
  template <class Between>
  std::size_t run_random(std::mt19937_64& rng, Between&& between,
                         std::optional<std::size_t> stop_after = std::nullopt) {
    std::size_t n = 0;
    for (;;) {
      if (stop_after && n >= *stop_after) break;
      auto ready = runnable();
      if (ready.empty()) break;
      auto t = ready[std::uniform_int_distribution<std::size_t>(0, ready.size() - 1)(rng)];
      step(t);
      between(n, t);
      ++n;
    }
    return n;
  }

  std::size_t run_random(std::mt19937_64& rng) {
    return run_random(rng, [](std::size_t, unsigned) {});
  }

  /// Releases every parked worker with a CrashSignal and joins them.
  void abort() {
    {
      std::lock_guard lk(mu_);
      aborting_ = true;
    }
    cv_.notify_all();
    join_threads();
  }

  /// Joins after all workers finished and rethrows the first failure.
  void join() {
    if (!all_finished()) throw ScriptError("join with threads still running");
    join_threads();
    for (auto& s : slots_) {
      if (s.error) std::rethrow_exception(s.error);
    }
  }

  std::size_t steps_taken() const {
    std::lock_guard lk(mu_);
    return steps_;
  }

  void before(MemOp op, std::size_t address) override {
    if (current_ != this) return;
    std::unique_lock lk(mu_);
    auto& s = slots_[current_index_];
    s.pending = PendingStep{op, address};
    ++s.parks;
    cv_.notify_all();
    cv_.wait(lk, [&] { return aborting_ || granted_ == static_cast<int>(current_index_); });
    if (aborting_) throw CrashSignal{};
    granted_ = -1;
  }

 private:
  struct Slot {
    bool done = false;
    std::size_t parks = 0;
    PendingStep pending;
    std::exception_ptr error;
  };

  const Slot& slot(unsigned t) const {
    if (t >= slots_.size()) throw ScriptError("no thread " + std::to_string(t));
    return slots_[t];
  }
  Slot& slot(unsigned t) {
    if (t >= slots_.size()) throw ScriptError("no thread " + std::to_string(t));
    return slots_[t];
  }

  void worker_main(unsigned t) {
    current_ = this;
    current_index_ = t;
    std::exception_ptr error;
    try {
      bodies_[t](t);
    } catch (const CrashSignal&) {
    } catch (...) {
      error = std::current_exception();
    }
    current_ = nullptr;
    std::lock_guard lk(mu_);
    slots_[t].done = true;
    slots_[t].error = error;
    cv_.notify_all();
  }

  void join_threads() {
    for (auto& w : workers_) {
      if (w.joinable()) w.join();
    }
  }

  static inline thread_local ControlledScheduler* current_ = nullptr;
  static inline thread_local unsigned current_index_ = 0;

  std::vector<Body> bodies_;
  std::vector<Slot> slots_;
  std::vector<std::thread> workers_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  int granted_ = -1;
  bool started_ = false;
  bool aborting_ = false;
  std::size_t steps_ = 0;
};

/// Free-running hook that yields the processor before a random fraction of
/// memory accesses, to shake out interleavings on few cores.
class ChaosYield final : public StepHook {
 public:
  ChaosYield(double probability, std::uint64_t seed)
      : cutoff_(static_cast<std::uint64_t>(probability * 18446744073709551616.0)),
        always_(probability >= 1.0),
        seed_(seed) {}

  void before(MemOp, std::size_t) override {
    thread_local std::mt19937_64 rng{0};
    thread_local const ChaosYield* owner = nullptr;
    thread_local std::uint64_t owner_seed = 0;
    if (owner != this || owner_seed != seed_) {
      owner = this;
      owner_seed = seed_;
      rng.seed(seed_ ^ (0x9e3779b97f4a7c15ull * (next_stream_.fetch_add(1) + 1)));
    }
    if (always_ || rng() < cutoff_) std::this_thread::yield();
  }

 private:
  std::uint64_t cutoff_;
  bool always_;
  std::uint64_t seed_;
  std::atomic<std::uint64_t> next_stream_{0};
};

/// Throws CrashSignal at the n-th memory access of the calling thread,
/// after invoking `on_crash`. Used to interrupt single-threaded code such
/// as recovery.
template <class OnCrash>
class CrashAtStep final : public StepHook {
 public:
  CrashAtStep(std::size_t n, OnCrash on_crash) : n_(n), on_crash_(std::move(on_crash)) {}

  void before(MemOp, std::size_t) override {
    if (fired_) return;
    if (seen_++ == n_) {
      fired_ = true;
      on_crash_();
      throw CrashSignal{};
    }
  }

  std::size_t seen() const noexcept { return seen_; }
  bool fired() const noexcept { return fired_; }

 private:
  std::size_t n_;
  OnCrash on_crash_;
  std::size_t seen_ = 0;
  bool fired_ = false;
};

/// Counts memory accesses.
class StepCounter final : public StepHook {
 public:
  void before(MemOp, std::size_t) override { ++count_; }
  std::size_t count() const noexcept { return count_; }

 private:
  std::size_t count_ = 0;
};

}  // namespace mcas::verify
