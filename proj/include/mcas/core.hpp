#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcas/counters.hpp"
#include "mcas/descriptor.hpp"
#include "mcas/memory.hpp"
#include "mcas/reclamation.hpp"
#include "mcas/tagged_word.hpp"

namespace mcas {

struct McasConfig {
  std::size_t arena_words = 64;
  unsigned max_width = 8;
  std::size_t descriptors_per_thread = 1024;
  ReclamationConfig reclamation;
  /// Failed allocation rounds (each one a scan plus a pause) before the
  /// pool is declared exhausted.
  std::size_t allocation_spins = 1u << 20;
};

/// What a managed word holds and the application value it stands for.
struct ReadResult {
  TaggedWord content;
  Value value = 0;
};

/// Lock-free multi-word CAS with k+1 CASes per k-word operation.
///
/// Stage one installs a handle to the matching WordDescriptor into every
/// target word, in address order; stage two finalizes the status with a
/// single CAS. Handles are left in place afterwards and the logical value
/// of a word is resolved through the status of the descriptor it points
/// to. Lingering handles are replaced by plain values when the epoch-based
/// reclaimer detaches the descriptor, or opportunistically by readers.
///
/// With `Durable` set the engine runs over simulated persistent memory and
/// adds one flush per target word, one fence before finalization, and a
/// flush plus fence of the status behind a DirtyFlag (two fences total).
/// Recovery lives in persistent.hpp.
template <class Memory, bool Durable = false, class Hooks = NullHooks>
class McasEngine {
 public:
  using Codec = MarkBitCodec;
  using memory_type = Memory;
  using hooks_type = Hooks;
  static constexpr bool kDurable = Durable;
  static_assert(!Durable || Memory::kPersistent, "durable MCAS needs persistent memory");

  explicit McasEngine(const McasConfig& cfg, std::span<const Value> initial = {}, Hooks hooks = {})
      : cfg_(validated(cfg)),
        layout_(layout_for(cfg_)),
        memory_(std::make_unique<Memory>(layout_.total_words(), cfg_.reclamation.max_threads)),
        hooks_(std::move(hooks)),
        counters_(std::make_unique<ThreadCounters[]>(cfg_.reclamation.max_threads)),
        free_(cfg_.reclamation.max_threads, cfg_.descriptors_per_thread),
        reclaimer_(*this, cfg_.reclamation),
        generation_(std::make_unique<std::atomic<std::uint64_t>[]>(layout_.descriptor_count)) {
    if (initial.size() > layout_.arena_words) {
      throw ContractError("more initial values than arena words");
    }
    layout_.write_meta(*memory_);
    for (std::size_t a = 0; a < layout_.arena_words; ++a) {
      Value v = a < initial.size() ? initial[a] : 0;
      memory_->store(layout_.arena_addr(a), Codec::encode_value(v).raw);
    }
    if constexpr (Memory::kPersistent) {
      memory_->set_pool_offset(layout_.pool_base());
      for (std::size_t i = 0; i < layout_.pool_base(); ++i) memory_->flush(0, i);
      memory_->fence(0);
    }
  }

  /// Adopts an existing memory, typically one rebuilt from a crash image
  /// and recovered. Its metadata must match `cfg`.
  McasEngine(const McasConfig& cfg, std::unique_ptr<Memory> memory, Hooks hooks = {})
      : cfg_(validated(cfg)),
        layout_(layout_for(cfg_)),
        memory_(std::move(memory)),
        hooks_(std::move(hooks)),
        counters_(std::make_unique<ThreadCounters[]>(cfg_.reclamation.max_threads)),
        free_(cfg_.reclamation.max_threads, cfg_.descriptors_per_thread),
        reclaimer_(*this, cfg_.reclamation),
        generation_(std::make_unique<std::atomic<std::uint64_t>[]>(layout_.descriptor_count)) {
    auto found = PoolLayout::read_meta(*memory_);
    if (found.arena_words != layout_.arena_words || found.max_width != layout_.max_width ||
        found.descriptor_count != layout_.descriptor_count) {
      throw ContractError("memory layout does not match the engine configuration");
    }
  }

  McasEngine(const McasEngine&) = delete;
  McasEngine& operator=(const McasEngine&) = delete;

  ThreadSlot register_thread() { return reclaimer_.register_thread(); }

  DescriptorRef make_descriptor(ThreadSlot s, std::span<const WordEntry> entries) {
    auto sorted = sorted_entries<Codec>(entries, layout_.arena_words, layout_.max_width);
    auto d = allocate(s);
    auto& mem = *memory_;
    const auto n = static_cast<unsigned>(sorted.size());
    for (unsigned i = 0; i < n; ++i) {
      mem.store(layout_.field_addr(d, i, 0), sorted[i].address);
      mem.store(layout_.field_addr(d, i, 1), Codec::encode_value(sorted[i].old_value).raw);
      mem.store(layout_.field_addr(d, i, 2), Codec::encode_value(sorted[i].new_value).raw);
    }
    mem.store(layout_.count_addr(d), n);
    mem.store(layout_.status_addr(d), McasStatus{StatusCode::active, false}.raw());
    if constexpr (Memory::kPersistent) {
      // Descriptor contents are persistent before the operation starts;
      // charged to the allocator, not to the MCAS.
      auto& c = counters_[s.id];
      for (std::size_t w = 0; w < 2 + 3 * std::size_t{n}; ++w) {
        mem.flush(s.id, layout_.status_addr(d) + w);
        ++c.aux_flushes;
      }
      mem.fence(s.id);
      ++c.aux_fences;
    }
    auto gen = generation_[d.index].fetch_add(1) + 1;
    hooks_.on_make(s.id, d, gen);
    return d;
  }

  DescriptorRef make_descriptor(ThreadSlot s, std::initializer_list<WordEntry> entries) {
    return make_descriptor(s, std::span<const WordEntry>(entries.begin(), entries.size()));
  }

  /// Runs the MCAS described by `d`. Returns true iff it took effect.
  bool execute(ThreadSlot s, DescriptorRef d) {
    check_descriptor(d);
    if (status(d).code != StatusCode::active) {
      throw ContractError("descriptor submitted twice or not built by make_descriptor");
    }
    reclaimer_.epoch_enter(s);
    auto& c = counters_[s.id];
    ++c.mcas_calls;
    bool ok = run(s, d, 0);
    if (ok) ++c.mcas_successes;
    hooks_.on_return(*this, s.id, d, ok);
    reclaimer_.epoch_exit(s);
    return ok;
  }

  /// Linearizable read of an arena word.
  Value read(ThreadSlot s, std::size_t address) {
    check_address(address);
    reclaimer_.epoch_enter(s);
    ++counters_[s.id].reads;
    auto r = read_internal_impl(s, address, std::nullopt, 0);
    if (Codec::is_descriptor(r.content)) {
      reader_assisted_detach(s, address, parent_of(r.content));
    }
    reclaimer_.epoch_exit(s);
    return r.value;
  }

  /// Resolves the content of `address`, helping any other ACTIVE operation
  /// found there. The caller must be inside an epoch. When the word holds
  /// a handle belonging to `self`, `value` is the raw content.
  ReadResult read_internal(ThreadSlot s, std::size_t address, std::optional<DescriptorRef> self) {
    check_address(address);
    return read_internal_impl(s, address, self, 0);
  }

  /// Replaces every handle into `d` that is still installed with its final
  /// value. Returns the number of CASes issued.
  std::size_t detach(ThreadSlot s, DescriptorRef d) {
    auto st = status(d);
    if (!st.finalized()) throw ContractError("detach of a descriptor that is not finalized");
    auto& mem = *memory_;
    auto& c = counters_[s.id];
    std::size_t issued = 0;
    const auto n = word_count(d);
    for (unsigned i = 0; i < n; ++i) {
      auto wd = word_descriptor(d, i);
      auto mine = handle_word(d, i).raw;
      auto addr = layout_.arena_addr(wd.address);
      auto cur = mem.load(addr);
      if (cur != mine) continue;
      ++issued;
      ++c.detach_cas;
      auto final_word = st.code == StatusCode::successful ? wd.new_word : wd.old_word;
      if (mem.cas(addr, cur, final_word.raw)) {
        hooks_.on_word_cas(s.id, wd.address, true, false, WriteKind::detach);
        if constexpr (Durable) {
          mem.flush(s.id, addr);
          ++c.aux_flushes;
        }
      }
    }
    if constexpr (Hooks::kScanAfterDetach) {
      hooks_.on_detached(s.id, d, generation(d), arena_references(d));
    }
    return issued;
  }

  /// With the configured probability, checks that every other thread has
  /// moved on and then swaps the handle at `address` for its final value.
  /// Returns whether an attempt was made.
  bool reader_assisted_detach(ThreadSlot s, std::size_t address, DescriptorRef d) {
    if (!reclaimer_.draw_assist(s)) return false;
    auto& c = counters_[s.id];
    ++c.assist_attempts;
    auto st = status(d);
    if (!st.finalized() || st.dirty) return true;
    auto& mem = *memory_;
    if (!reclaimer_.assist_scan(s, [&mem] { mem.pause(); })) return true;
    const auto n = word_count(d);
    for (unsigned i = 0; i < n; ++i) {
      auto wd = word_descriptor(d, i);
      if (wd.address != address) continue;
      auto addr = layout_.arena_addr(address);
      auto expected = handle_word(d, i).raw;
      auto final_word = st.code == StatusCode::successful ? wd.new_word : wd.old_word;
      if (mem.load(addr) != expected) break;
      ++c.detach_cas;
      if (mem.cas(addr, expected, final_word.raw)) {
        hooks_.on_word_cas(s.id, address, true, false, WriteKind::assist_detach);
        if constexpr (Durable) {
          // The owner's reclamation fence does not cover this thread's
          // flushes, so the write is made persistent here.
          mem.flush(s.id, addr);
          mem.fence(s.id);
          ++c.aux_flushes;
          ++c.aux_fences;
        }
      }
      break;
    }
    return true;
  }

  /// Writes a plain value into a word that no descriptor references, e.g.
  /// a freshly allocated list node that is not yet reachable.
  void initialize_word(ThreadSlot s, std::size_t address, Value v) {
    check_address(address);
    auto addr = layout_.arena_addr(address);
    auto& mem = *memory_;
    if (Codec::is_descriptor(TaggedWord{mem.load(addr)})) {
      throw ContractError("initialize_word on a word that holds a descriptor handle");
    }
    mem.store(addr, Codec::encode_value(v).raw);
    if constexpr (Memory::kPersistent) {
      mem.flush(s.id, addr);
      mem.fence(s.id);
      ++counters_[s.id].aux_flushes;
      ++counters_[s.id].aux_fences;
    }
  }

  McasStatus status(DescriptorRef d) const {
    return McasStatus::decode(memory_->load(layout_.status_addr(d)));
  }

  unsigned word_count(DescriptorRef d) const {
    return static_cast<unsigned>(memory_->load(layout_.count_addr(d)));
  }

  WordDescriptor word_descriptor(DescriptorRef d, unsigned slot) const {
    auto& mem = *memory_;
    return WordDescriptor{static_cast<std::size_t>(mem.load(layout_.field_addr(d, slot, 0))),
                          TaggedWord{mem.load(layout_.field_addr(d, slot, 1))},
                          TaggedWord{mem.load(layout_.field_addr(d, slot, 2))}, d};
  }

  /// The tagged handle that stage one installs for slot `slot` of `d`.
  TaggedWord handle_word(DescriptorRef d, unsigned slot) const {
    return Codec::encode_handle(Codec::handle_for(layout_.word_id(d, slot)));
  }

  DescriptorRef parent_of(TaggedWord handle) const {
    return layout_.parent_of(Codec::id_of(Codec::decode_handle(handle)));
  }

  TaggedWord raw_word(std::size_t address) const {
    check_address(address);
    return TaggedWord{memory_->load(layout_.arena_addr(address))};
  }

  /// Logical value of a word without helping or epoch protection. Only
  /// meaningful while no operation is running.
  Value peek(std::size_t address) const {
    auto w = raw_word(address);
    if (!Codec::is_descriptor(w)) return Codec::decode_value(w);
    auto d = parent_of(w);
    auto wd = word_descriptor(d, layout_.slot_of(Codec::id_of(Codec::decode_handle(w))));
    return Codec::decode_value(status(d).code == StatusCode::successful ? wd.new_word
                                                                        : wd.old_word);
  }

  /// Arena words currently holding a handle into `d`.
  std::size_t arena_references(DescriptorRef d) const {
    std::size_t refs = 0;
    for (std::size_t a = 0; a < layout_.arena_words; ++a) {
      auto w = TaggedWord{memory_->load(layout_.arena_addr(a))};
      if (Codec::is_descriptor(w) && parent_of(w) == d) ++refs;
    }
    return refs;
  }

  std::size_t arena_handles() const {
    std::size_t refs = 0;
    for (std::size_t a = 0; a < layout_.arena_words; ++a) {
      if (Codec::is_descriptor(TaggedWord{memory_->load(layout_.arena_addr(a))})) ++refs;
    }
    return refs;
  }

  std::uint64_t generation(DescriptorRef d) const { return generation_[d.index].load(); }

  ThreadCounters& counters(ThreadSlot s) { return counters_[s.id]; }
  const ThreadCounters& counters(ThreadSlot s) const { return counters_[s.id]; }
  ThreadCounters total_counters() const {
    ThreadCounters sum;
    for (unsigned i = 0; i < reclaimer_.epochs().registered(); ++i) sum += counters_[i];
    return sum;
  }

  Reclaimer<McasEngine>& reclamation() noexcept { return reclaimer_; }
  Memory& memory() noexcept { return *memory_; }
  const Memory& memory() const noexcept { return *memory_; }
  const PoolLayout& layout() const noexcept { return layout_; }
  const McasConfig& config() const noexcept { return cfg_; }
  std::size_t arena_words() const noexcept { return layout_.arena_words; }
  Hooks& hooks() noexcept { return hooks_; }

  /// Detaches and recycles every retired descriptor. Quiescent use only.
  void drain() { reclaimer_.drain(); }

  // Reclaimer client interface.
  bool is_finalized(DescriptorRef d) const { return status(d).finalized(); }

  void before_reclaim(ThreadSlot s) {
    if constexpr (Durable) {
      memory_->fence(s.id);
      ++counters_[s.id].aux_fences;
    }
  }

  void reclaim(ThreadSlot, DescriptorRef d) {
    if constexpr (!Memory::kPersistent) {
      if (cfg_.reclamation.poison_reclaimed) memory_->store(layout_.status_addr(d), kPoisonStatus);
    }
    free_.push(d);
  }

 private:
  static McasConfig validated(McasConfig cfg) {
    if (cfg.max_width == 0 || cfg.max_width > 64) throw ContractError("max_width must be in [1,64]");
    if (cfg.arena_words == 0) throw ContractError("arena must have at least one word");
    if (cfg.reclamation.max_threads == 0) throw ContractError("max_threads must be positive");
    if (cfg.descriptors_per_thread == 0) throw ContractError("descriptor pool must be non-empty");
    return cfg;
  }

  static PoolLayout layout_for(const McasConfig& cfg) {
    PoolLayout l;
    l.arena_words = cfg.arena_words;
    l.max_width = cfg.max_width;
    l.descriptor_count = cfg.descriptors_per_thread * cfg.reclamation.max_threads;
    return l;
  }

  void check_address(std::size_t a) const {
    if (a >= layout_.arena_words) {
      throw ContractError("address " + std::to_string(a) + " outside the arena");
    }
  }

  void check_descriptor(DescriptorRef d) const {
    if (d.index >= layout_.descriptor_count) throw ContractError("descriptor index out of range");
  }

  DescriptorRef allocate(ThreadSlot s) {
    for (std::size_t spins = 0;; ++spins) {
      if (auto d = free_.pop(s.id)) return *d;
      if (spins >= cfg_.allocation_spins) {
        throw CapacityError("descriptor pool exhausted for thread " + std::to_string(s.id));
      }
      reclaimer_.quiescence_scan(s);
      memory_->pause();
    }
  }

  ReadResult read_internal_impl(ThreadSlot s, std::size_t address,
                                std::optional<DescriptorRef> self, unsigned depth) {
    auto& mem = *memory_;
    auto& c = counters_[s.id];
    const auto addr = layout_.arena_addr(address);
    for (;;) {
      TaggedWord content{mem.load(addr)};
      if (!Codec::is_descriptor(content)) return {content, Codec::decode_value(content)};
      auto id = Codec::id_of(Codec::decode_handle(content));
      auto parent = layout_.parent_of(id);
      if (self && parent == *self) return {content, content.raw};
      auto raw_status = mem.load(layout_.status_addr(parent));
      auto st = McasStatus::decode(raw_status);
      if (raw_status == kPoisonStatus || st.code == StatusCode::free) ++c.poison_observed;
      if (st.code == StatusCode::active) {
        ++c.helps;
        run(s, parent, depth + 1);
        continue;
      }
      if constexpr (Durable) {
        if (st.dirty) {
          // Persist someone else's finalization before depending on it.
          auto status_addr = layout_.status_addr(parent);
          mem.flush(s.id, status_addr);
          mem.fence(s.id);
          ++c.flushes;
          ++c.fences;
          ++c.dirty_helps;
          auto cleared = raw_status & ~kDirtyFlag;
          mem.store(status_addr, cleared);
          hooks_.on_status_store(s.id, parent, generation(parent), raw_status, cleared);
          continue;
        }
      }
      auto slot = layout_.slot_of(id);
      auto which = st.code == StatusCode::successful ? 2u : 1u;
      TaggedWord resolved{mem.load(layout_.field_addr(parent, slot, which))};
      return {content, Codec::decode_value(resolved)};
    }
  }

  bool run(ThreadSlot s, DescriptorRef d, unsigned depth) {
    auto& mem = *memory_;
    auto& c = counters_[s.id];
    c.max_help_depth = std::max<std::uint64_t>(c.max_help_depth, depth);
    const auto status_addr = layout_.status_addr(d);
    const auto n = word_count(d);
    bool success = true;
    bool stop = false;
    for (unsigned i = 0; i < n && !stop; ++i) {
      const auto wd = word_descriptor(d, i);
      const auto mine = handle_word(d, i);
      const auto expected_value = Codec::decode_value(wd.old_word);
      for (;;) {
        auto r = read_internal_impl(s, wd.address, d, depth);
        if (r.content == mine) break;
        if (r.value != expected_value) {
          success = false;
          stop = true;
          break;
        }
        // A helper may already have finalized us; never re-acquire then.
        if (status_code(mem.load(status_addr)) != StatusCode::active) {
          stop = true;
          break;
        }
        auto expected = r.content.raw;
        ++c.cas;
        if (mem.cas(layout_.arena_addr(wd.address), expected, mine.raw)) {
          hooks_.on_word_cas(s.id, wd.address, Codec::is_descriptor(r.content), true,
                             WriteKind::acquire);
          hooks_.on_acquire(s.id, d, generation(d), wd.address);
          break;
        }
      }
    }

    if constexpr (Durable) {
      for (unsigned i = 0; i < n; ++i) {
        mem.flush(s.id, layout_.arena_addr(word_descriptor(d, i).address));
        ++c.flushes;
      }
      mem.fence(s.id);
      ++c.fences;
    }

    auto desired = McasStatus{success ? StatusCode::successful : StatusCode::failed, Durable}.raw();
    std::uint64_t expected = McasStatus{StatusCode::active, false}.raw();
    ++c.cas;
    if (mem.cas(status_addr, expected, desired)) {
      hooks_.on_status_cas(s.id, d, generation(d), McasStatus{StatusCode::active, false}.raw(),
                           desired);
      hooks_.on_finalized(*this, s.id, d);
      reclaimer_.retire_for_cleanup(s, d);
    }

    if constexpr (Durable) {
      mem.flush(s.id, status_addr);
      mem.fence(s.id);
      ++c.flushes;
      ++c.fences;
      auto cur = mem.load(status_addr);
      auto cleared = cur & ~kDirtyFlag;
      mem.store(status_addr, cleared);
      hooks_.on_status_store(s.id, d, generation(d), cur, cleared);
    }
    return status_code(mem.load(status_addr)) == StatusCode::successful;
  }

  McasConfig cfg_;
  PoolLayout layout_;
  std::unique_ptr<Memory> memory_;
  [[no_unique_address]] Hooks hooks_;
  std::unique_ptr<ThreadCounters[]> counters_;
  DescriptorFreeList free_;
  Reclaimer<McasEngine> reclaimer_;
  std::unique_ptr<std::atomic<std::uint64_t>[]> generation_;
};

/// Volatile k+1 MCAS over plain atomic memory.
template <class Hooks = NullHooks>
using VolatileMcas = McasEngine<AtomicMemory, false, Hooks>;

}  // namespace mcas
