#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>

#include "mcas/descriptor.hpp"

namespace mcas {

/// Per-thread operation counters. Written only by the owning thread and
/// merged after the thread stops.
struct alignas(64) ThreadCounters {
  std::uint64_t mcas_calls = 0;     // top-level MCAS invocations
  std::uint64_t mcas_successes = 0;
  std::uint64_t reads = 0;          // top-level reads
  std::uint64_t cas = 0;            // CASes on the MCAS critical path, helping included
  std::uint64_t helps = 0;          // ongoing MCAS operations encountered and helped
  std::uint64_t dirty_helps = 0;    // finalized-but-dirty statuses persisted by a reader
  std::uint64_t detach_cas = 0;     // CASes spent replacing lingering handles
  std::uint64_t flushes = 0;        // persistence flushes on the MCAS/read path
  std::uint64_t fences = 0;         // persistence fences on the MCAS/read path
  std::uint64_t aux_flushes = 0;    // allocator, detach and recovery flushes
  std::uint64_t aux_fences = 0;     // allocator, reclamation and reader-assist fences
  std::uint64_t assist_attempts = 0;
  std::uint64_t scans = 0;
  std::uint64_t scans_progressed = 0;
  std::uint64_t reclaimed = 0;
  std::uint64_t poison_observed = 0;
  std::uint64_t max_help_depth = 0;

  ThreadCounters& operator+=(const ThreadCounters& o) noexcept {
    mcas_calls += o.mcas_calls;
    mcas_successes += o.mcas_successes;
    reads += o.reads;
    cas += o.cas;
    helps += o.helps;
    dirty_helps += o.dirty_helps;
    detach_cas += o.detach_cas;
    flushes += o.flushes;
    fences += o.fences;
    aux_flushes += o.aux_flushes;
    aux_fences += o.aux_fences;
    assist_attempts += o.assist_attempts;
    scans += o.scans;
    scans_progressed += o.scans_progressed;
    reclaimed += o.reclaimed;
    poison_observed += o.poison_observed;
    max_help_depth = std::max(max_help_depth, o.max_help_depth);
    return *this;
  }
};

/// Why a word was written by CAS.
enum class WriteKind : std::uint8_t {
  acquire,         // value/handle -> own handle
  detach,          // lingering handle -> final value, by the reclaimer
  assist_detach,   // lingering handle -> final value, by a reader
  unlock,          // Harris third phase
  rdcss_install,
  rdcss_complete,
  recovery,
};

/// Instrumentation interface of the MCAS engines. Every hook is a no-op
/// here; a recording implementation lives in verify/invariants.hpp.
struct NullHooks {
  /// When true the engine counts arena words still referencing a
  /// descriptor right after detaching it (an O(arena) scan).
  static constexpr bool kScanAfterDetach = false;

  void on_make(unsigned, DescriptorRef, std::uint64_t) noexcept {}
  void on_acquire(unsigned, DescriptorRef, std::uint64_t, std::size_t) noexcept {}
  void on_word_cas(unsigned, std::size_t, bool /*from_handle*/, bool /*to_handle*/,
                   WriteKind) noexcept {}
  void on_status_cas(unsigned, DescriptorRef, std::uint64_t, std::uint64_t /*from*/,
                     std::uint64_t /*to*/) noexcept {}
  void on_status_store(unsigned, DescriptorRef, std::uint64_t, std::uint64_t /*from*/,
                       std::uint64_t /*to*/) noexcept {}
  void on_detached(unsigned, DescriptorRef, std::uint64_t, std::size_t /*lingering*/) noexcept {}
  template <class Engine>
  void on_finalized(const Engine&, unsigned, DescriptorRef) noexcept {}
  template <class Engine>
  void on_return(const Engine&, unsigned, DescriptorRef, bool) noexcept {}
};

}  // namespace mcas
