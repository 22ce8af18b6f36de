#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>

#include "mcas/core.hpp"
#include "mcas/descriptor.hpp"
#include "mcas/sim_pmem.hpp"

namespace mcas {

/// Durably linearizable MCAS over simulated persistent memory.
template <class Hooks = NullHooks>
using PersistentMcas = McasEngine<SimMemory, true, Hooks>;

struct RecoveryStats {
  std::size_t descriptors_scanned = 0;
  std::size_t rolled_back = 0;     // operations found ACTIVE
  std::size_t rolled_forward = 0;  // finalized operations with lingering handles
  std::size_t words_rewritten = 0;

  friend bool operator==(const RecoveryStats&, const RecoveryStats&) = default;
};

class RecoveryError : public std::runtime_error {
 public:
  explicit RecoveryError(const std::string& what) : std::runtime_error(what) {}
};

/// Brings a post-crash memory back to a state with no descriptor handles.
///
/// Walks the pool in allocation order. Words still acquired by an ACTIVE
/// descriptor get their old value and the descriptor is marked FAILED;
/// words still acquired by a finalized descriptor get the value its status
/// selects and the DirtyFlag is cleared. Every write is flushed and a
/// single fence ends the pass. Safe to interrupt by another crash and
/// re-run. Must run single-threaded, before any engine uses the memory.
template <class Memory>
RecoveryStats recover(Memory& mem, unsigned tid = 0) {
  using Codec = MarkBitCodec;
  PoolLayout layout;
  try {
    layout = PoolLayout::read_meta(mem);
  } catch (const CorruptPoolError& e) {
    throw RecoveryError(e.what());
  }

  RecoveryStats stats;
  for (std::size_t idx = 0; idx < layout.descriptor_count; ++idx) {
    DescriptorRef d{static_cast<std::uint32_t>(idx)};
    const auto status_addr = layout.status_addr(d);
    const auto raw = mem.load(status_addr);
    if (raw == 0) continue;
    ++stats.descriptors_scanned;
    const auto st = McasStatus::decode(raw);
    if ((raw & ~(kStatusCodeMask | kDirtyFlag)) != 0 || st.code == StatusCode::free ||
        (st.dirty && !st.finalized())) {
      throw RecoveryError("descriptor " + std::to_string(idx) + " has a corrupt status word");
    }
    const auto n = mem.load(layout.count_addr(d));
    if (n > layout.max_width) {
      throw RecoveryError("descriptor " + std::to_string(idx) + " has a corrupt word count");
    }

    bool rewrote = false;
    for (unsigned i = 0; i < n; ++i) {
      const auto address = mem.load(layout.field_addr(d, i, 0));
      if (address >= layout.arena_words) {
        throw RecoveryError("descriptor " + std::to_string(idx) + " targets an address outside the arena");
      }
      const auto target = layout.arena_addr(address);
      const auto handle = Codec::encode_handle(Codec::handle_for(layout.word_id(d, i))).raw;
      if (mem.load(target) != handle) continue;
      const unsigned which = st.code == StatusCode::successful ? 2 : 1;
      mem.store(target, mem.load(layout.field_addr(d, i, which)));
      mem.flush(tid, target);
      ++stats.words_rewritten;
      rewrote = true;
    }

    if (st.code == StatusCode::active) {
      ++stats.rolled_back;
      mem.store(status_addr, McasStatus{StatusCode::failed, false}.raw());
      mem.flush(tid, status_addr);
    } else {
      if (rewrote) ++stats.rolled_forward;
      if (st.dirty) {
        mem.store(status_addr, raw & ~kDirtyFlag);
        mem.flush(tid, status_addr);
      }
    }
  }
  mem.fence(tid);
  return stats;
}

/// Rebuilds a simulated memory from a crash image and recovers it.
inline std::unique_ptr<SimMemory> recover_image(const CrashImage& image, unsigned max_threads,
                                                RecoveryStats* stats = nullptr) {
  auto mem = std::make_unique<SimMemory>(image, max_threads);
  auto st = recover(*mem);
  if (stats != nullptr) *stats = st;
  return mem;
}

}  // namespace mcas
