#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcas/tagged_word.hpp"

namespace mcas {

enum class StatusCode : std::uint8_t { free = 0, active = 1, successful = 2, failed = 3 };

inline const char* to_string(StatusCode c) noexcept {
  switch (c) {
    case StatusCode::free: return "FREE";
    case StatusCode::active: return "ACTIVE";
    case StatusCode::successful: return "SUCCESSFUL";
    case StatusCode::failed: return "FAILED";
  }
  return "?";
}

inline constexpr std::uint64_t kStatusCodeMask = 0x3;
inline constexpr std::uint64_t kDirtyFlag = 0x4;
/// Written into the status word of reclaimed descriptors when poisoning is
/// enabled; never a valid status.
inline constexpr std::uint64_t kPoisonStatus = 0xdeadbeef00000000ull;

/// Decoded status word: a code plus the persistence DirtyFlag.
struct McasStatus {
  StatusCode code = StatusCode::free;
  bool dirty = false;

  static constexpr McasStatus decode(std::uint64_t raw) noexcept {
    return {static_cast<StatusCode>(raw & kStatusCodeMask), (raw & kDirtyFlag) != 0};
  }
  constexpr std::uint64_t raw() const noexcept {
    return static_cast<std::uint64_t>(code) | (dirty ? kDirtyFlag : 0);
  }
  constexpr bool finalized() const noexcept {
    return code == StatusCode::successful || code == StatusCode::failed;
  }

  friend constexpr bool operator==(McasStatus, McasStatus) = default;
};

inline constexpr StatusCode status_code(std::uint64_t raw) noexcept {
  return static_cast<StatusCode>(raw & kStatusCodeMask);
}

/// One target of an MCAS request, as supplied by the caller.
struct WordEntry {
  std::size_t address = 0;
  Value old_value = 0;
  Value new_value = 0;

  friend bool operator==(const WordEntry&, const WordEntry&) = default;
};

/// Index of a descriptor record in the pool.
struct DescriptorRef {
  std::uint32_t index = 0;

  friend constexpr bool operator==(DescriptorRef, DescriptorRef) = default;
};

/// Per-word record of a descriptor, as stored in the pool. Immutable once
/// the parent has been handed to an MCAS call.
struct WordDescriptor {
  std::size_t address = 0;
  TaggedWord old_word;
  TaggedWord new_word;
  DescriptorRef parent;
};

class CorruptPoolError : public std::runtime_error {
 public:
  explicit CorruptPoolError(const std::string& what) : std::runtime_error(what) {}
};

/// Placement of metadata, arena and descriptor records inside a word
/// memory:
///
///   [meta: 6 words][arena][descriptor records][aux records]
///
/// A descriptor record is `status, count, (address, old, new) * max_width`.
/// Aux records (RDCSS descriptors of the Harris baseline) are 5 words. The
/// metadata lives in the same memory so that it survives a crash together
/// with the pool.
struct PoolLayout {
  static constexpr std::uint64_t kMagic = 0x4154454d5341434dull;  // "MCASMETA"
  static constexpr std::size_t kMetaWords = 6;
  static constexpr std::size_t kAuxStride = 5;

  std::size_t arena_words = 0;
  unsigned max_width = 0;
  std::size_t descriptor_count = 0;
  std::size_t aux_count = 0;

  constexpr std::size_t arena_base() const noexcept { return kMetaWords; }
  constexpr std::size_t pool_base() const noexcept { return kMetaWords + arena_words; }
  constexpr std::size_t stride() const noexcept { return 2 + 3 * std::size_t{max_width}; }
  constexpr std::size_t aux_base() const noexcept {
    return pool_base() + descriptor_count * stride();
  }
  constexpr std::size_t total_words() const noexcept {
    return aux_base() + aux_count * kAuxStride;
  }

  constexpr std::size_t arena_addr(std::size_t a) const noexcept { return arena_base() + a; }
  constexpr std::size_t status_addr(DescriptorRef d) const noexcept {
    return pool_base() + d.index * stride();
  }
  constexpr std::size_t count_addr(DescriptorRef d) const noexcept {
    return status_addr(d) + 1;
  }
  constexpr std::size_t field_addr(DescriptorRef d, unsigned slot, unsigned field) const noexcept {
    return status_addr(d) + 2 + 3 * std::size_t{slot} + field;
  }
  constexpr std::size_t aux_addr(std::size_t aux, unsigned field) const noexcept {
    return aux_base() + aux * kAuxStride + field;
  }

  /// Handle id of slot `slot` of descriptor `d`.
  constexpr std::uint64_t word_id(DescriptorRef d, unsigned slot) const noexcept {
    return std::uint64_t{d.index} * max_width + slot;
  }
  constexpr DescriptorRef parent_of(std::uint64_t word_id) const noexcept {
    return DescriptorRef{static_cast<std::uint32_t>(word_id / max_width)};
  }
  constexpr unsigned slot_of(std::uint64_t word_id) const noexcept {
    return static_cast<unsigned>(word_id % max_width);
  }

  constexpr std::uint64_t checksum() const noexcept {
    return kMagic ^ (arena_words * 0x9e3779b97f4a7c15ull) ^ (std::uint64_t{max_width} << 40) ^
           (descriptor_count * 0xc2b2ae3d27d4eb4full) ^ (aux_count << 20);
  }

  template <class Memory>
  void write_meta(Memory& mem) const {
    mem.store(0, kMagic);
    mem.store(1, arena_words);
    mem.store(2, max_width);
    mem.store(3, descriptor_count);
    mem.store(4, aux_count);
    mem.store(5, checksum());
  }

  static PoolLayout from_meta(std::span<const std::uint64_t> meta, std::size_t memory_words) {
    if (meta.size() < kMetaWords || meta[0] != kMagic) {
      throw CorruptPoolError("pool metadata magic mismatch");
    }
    PoolLayout l;
    l.arena_words = meta[1];
    l.max_width = static_cast<unsigned>(meta[2]);
    l.descriptor_count = meta[3];
    l.aux_count = meta[4];
    if (l.max_width == 0 || meta[2] > 64 || meta[5] != l.checksum() ||
        l.total_words() != memory_words) {
      throw CorruptPoolError("pool metadata inconsistent with memory size");
    }
    return l;
  }

  template <class Memory>
  static PoolLayout read_meta(const Memory& mem) {
    std::uint64_t meta[kMetaWords];
    for (std::size_t i = 0; i < kMetaWords; ++i) meta[i] = mem.load(i);
    return from_meta(meta, mem.size());
  }
};

/// Validates a request and returns its entries sorted by address.
template <class Codec>
std::vector<WordEntry> sorted_entries(std::span<const WordEntry> entries, std::size_t arena_words,
                                      unsigned max_width) {
  if (entries.empty()) throw ContractError("MCAS request has no target words");
  if (entries.size() > max_width) {
    throw ContractError("MCAS request targets " + std::to_string(entries.size()) +
                        " words, more than the configured maximum " + std::to_string(max_width));
  }
  std::vector<WordEntry> sorted(entries.begin(), entries.end());
  for (const auto& e : sorted) {
    if (e.address >= arena_words) {
      throw ContractError("address " + std::to_string(e.address) + " outside the arena");
    }
    if (!Codec::fits(e.old_value) || !Codec::fits(e.new_value)) {
      throw ContractError("value collides with the reserved tag bits");
    }
  }
  std::sort(sorted.begin(), sorted.end(),
            [](const WordEntry& a, const WordEntry& b) { return a.address < b.address; });
  auto dup = std::adjacent_find(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return a.address == b.address;
  });
  if (dup != sorted.end()) {
    throw ContractError("duplicate target address " + std::to_string(dup->address));
  }
  return sorted;
}

}  // namespace mcas
