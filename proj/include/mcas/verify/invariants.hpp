#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "mcas/counters.hpp"
#include "mcas/descriptor.hpp"

namespace mcas::verify {

struct InvariantReport {
  std::size_t status_cases = 0;     // successful status CASes
  std::size_t finalized = 0;        // distinct (descriptor, generation) finalized
  std::size_t acquisitions = 0;
  std::size_t detaches = 0;
  std::size_t persistence_checks = 0;

  std::size_t monotonicity_violations = 0;
  std::size_t single_finalizer_violations = 0;
  std::size_t reacquisition_violations = 0;
  std::size_t acquired_forever_violations = 0;
  std::size_t detach_violations = 0;
  std::size_t persistence_violations = 0;
  std::vector<std::string> messages;  // first few violations, for diagnostics

  std::size_t total_violations() const noexcept {
    return monotonicity_violations + single_finalizer_violations + reacquisition_violations +
           acquired_forever_violations + detach_violations + persistence_violations;
  }
  bool clean() const noexcept { return total_violations() == 0; }
};

/// Hook implementation that logs status transitions, acquisitions and
/// word rewrites per thread and checks the MCAS invariants offline:
///
///  - status monotonicity: status CASes leave ACTIVE for a final code;
///    later plain stores never change the code
///  - single finalizer: at most one successful status CAS per descriptor
///    generation (exactly one when every operation completed)
///  - no re-acquisition: a descriptor generation acquires each word once
///  - acquired-forever: a handle only turns back into a plain value through
///    a detach, an unlock (baseline only) or an RDCSS completion
///  - post-detach cleanliness: no arena word references a descriptor right
///    after it was detached
///  - on persistent memory: acquisitions are persistent when the status is
///    finalized, and the status is persistent when the operation returns
///
/// Copies share one log, so the caller keeps a copy and hands another to
/// the engine.
class RecordingHooks {
 public:
  static constexpr bool kScanAfterDetach = true;

  explicit RecordingHooks(unsigned max_threads = 16) : log_(std::make_shared<Log>(max_threads)) {}

  void on_make(unsigned, DescriptorRef, std::uint64_t) noexcept {}

  void on_acquire(unsigned tid, DescriptorRef d, std::uint64_t gen, std::size_t address) {
    local(tid).acquires.push_back({d.index, gen, address});
  }

  void on_word_cas(unsigned tid, std::size_t address, bool from_handle, bool to_handle,
                   WriteKind kind) {
    bool ok = true;
    switch (kind) {
      case WriteKind::acquire:
      case WriteKind::rdcss_install:
        ok = to_handle;
        break;
      case WriteKind::detach:
      case WriteKind::assist_detach:
      case WriteKind::unlock:
      case WriteKind::recovery:
        ok = from_handle && !to_handle;
        break;
      case WriteKind::rdcss_complete:
        ok = from_handle;
        break;
    }
    if (!ok) {
      violation(tid, local(tid).acquired_forever,
                "word " + std::to_string(address) + " rewritten outside the handle discipline");
    }
  }

  void on_status_cas(unsigned tid, DescriptorRef d, std::uint64_t gen, std::uint64_t from,
                     std::uint64_t to) {
    local(tid).status_cas.push_back({d.index, gen});
    if (status_code(from) != StatusCode::active || !McasStatus::decode(to).finalized()) {
      violation(tid, local(tid).monotonicity,
                "descriptor " + std::to_string(d.index) + " status CAS from a non-ACTIVE code");
    }
  }

  void on_status_store(unsigned tid, DescriptorRef d, std::uint64_t, std::uint64_t from,
                       std::uint64_t to) {
    if (status_code(from) != status_code(to) || !McasStatus::decode(to).finalized()) {
      violation(tid, local(tid).monotonicity,
                "descriptor " + std::to_string(d.index) + " status store changed the code");
    }
  }

  void on_detached(unsigned tid, DescriptorRef d, std::uint64_t, std::size_t lingering) {
    ++local(tid).detaches;
    if (lingering != 0) {
      violation(tid, local(tid).detach,
                "descriptor " + std::to_string(d.index) + " still referenced by " +
                    std::to_string(lingering) + " word(s) after detach");
    }
  }

  template <class Engine>
  void on_finalized(const Engine& engine, unsigned tid, DescriptorRef d) {
    if constexpr (Engine::memory_type::kPersistent) {
      const auto& mem = engine.memory();
      const auto& layout = engine.layout();
      ++local(tid).persistence_checks;
      const auto n = mem.inspect(layout.count_addr(d));
      for (unsigned i = 0; i < n; ++i) {
        const auto target = layout.arena_addr(mem.inspect(layout.field_addr(d, i, 0)));
        const auto h = engine.handle_word(d, i).raw;
        const auto before = mem.inspect(target);
        const auto persisted = mem.persistent_value(target);
        const auto after = mem.inspect(target);
        if (before == h && after == h && persisted != h) {
          violation(tid, local(tid).persistence,
                    "descriptor " + std::to_string(d.index) +
                        " finalized while an acquisition is not persistent");
        }
      }
    }
  }

  template <class Engine>
  void on_return(const Engine& engine, unsigned tid, DescriptorRef d, bool) {
    if constexpr (Engine::memory_type::kPersistent) {
      ++local(tid).persistence_checks;
      auto st = McasStatus::decode(engine.memory().persistent_value(engine.layout().status_addr(d)));
      if (!st.finalized()) {
        violation(tid, local(tid).persistence,
                  "descriptor " + std::to_string(d.index) + " returned before its status was persistent");
      }
    }
  }

  /// Offline analysis. Call only while no engine thread is running.
  /// `all_completed` demands a finalization for every descriptor that
  /// acquired anything, which holds for runs without a crash.
  InvariantReport report(bool all_completed = true) const {
    InvariantReport r;
    std::map<std::pair<std::uint32_t, std::uint64_t>, std::size_t> finals;
    std::set<std::tuple<std::uint32_t, std::uint64_t, std::size_t>> acquired;
    std::set<std::pair<std::uint32_t, std::uint64_t>> acquirers;
    for (const auto& t : log_->threads) {
      r.monotonicity_violations += t.monotonicity;
      r.acquired_forever_violations += t.acquired_forever;
      r.detach_violations += t.detach;
      r.persistence_violations += t.persistence;
      r.detaches += t.detaches;
      r.persistence_checks += t.persistence_checks;
      for (const auto& m : t.messages) {
        if (r.messages.size() < 16) r.messages.push_back(m);
      }
      for (const auto& s : t.status_cas) {
        ++r.status_cases;
        ++finals[{s.index, s.gen}];
      }
      for (const auto& a : t.acquires) {
        ++r.acquisitions;
        acquirers.insert({a.index, a.gen});
        if (!acquired.insert({a.index, a.gen, a.address}).second) {
          ++r.reacquisition_violations;
          note(r, "descriptor " + std::to_string(a.index) + " acquired word " +
                      std::to_string(a.address) + " twice");
        }
      }
    }
    r.finalized = finals.size();
    for (const auto& [key, count] : finals) {
      if (count > 1) {
        ++r.single_finalizer_violations;
        note(r, "descriptor " + std::to_string(key.first) + " finalized " + std::to_string(count) + " times");
      }
    }
    if (all_completed) {
      for (const auto& key : acquirers) {
        if (finals.find(key) == finals.end()) {
          ++r.single_finalizer_violations;
          note(r, "descriptor " + std::to_string(key.first) + " was never finalized");
        }
      }
    }
    return r;
  }

 private:
  struct Acquire {
    std::uint32_t index;
    std::uint64_t gen;
    std::size_t address;
  };
  struct StatusCas {
    std::uint32_t index;
    std::uint64_t gen;
  };
  struct alignas(64) ThreadLog {
    std::vector<Acquire> acquires;
    std::vector<StatusCas> status_cas;
    std::vector<std::string> messages;
    std::size_t monotonicity = 0;
    std::size_t acquired_forever = 0;
    std::size_t detach = 0;
    std::size_t persistence = 0;
    std::size_t detaches = 0;
    std::size_t persistence_checks = 0;
  };
  struct Log {
    explicit Log(unsigned n) : threads(n) {}
    std::vector<ThreadLog> threads;
  };

  ThreadLog& local(unsigned tid) { return log_->threads.at(tid); }

  void violation(unsigned tid, std::size_t& counter, std::string what) {
    ++counter;
    auto& msgs = local(tid).messages;
    if (msgs.size() < 16) msgs.push_back(std::move(what));
  }

  static void note(InvariantReport& r, std::string what) {
    if (r.messages.size() < 16) r.messages.push_back(std::move(what));
  }

  std::shared_ptr<Log> log_;
};

}  // namespace mcas::verify
