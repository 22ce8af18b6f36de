#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>

#include "mcas/core.hpp"
#include "mcas/counters.hpp"
#include "mcas/descriptor.hpp"
#include "mcas/memory.hpp"
#include "mcas/reclamation.hpp"
#include "mcas/tagged_word.hpp"

namespace mcas {

/// Harris-style MCAS baseline: RDCSS-based locking, a status CAS, and an
/// immediate unlock phase, for 3k+1 CASes per uncontended k-word
/// operation.
///
/// Words carry two tag bits: 01 marks a WordDescriptor handle of an MCAS,
/// 10 marks an RDCSS descriptor. RDCSS descriptors are real pool records,
/// allocated per call and reclaimed through the same epoch scheme as MCAS
/// descriptors.
///
/// `Naive` replaces RDCSS with a single CAS. That variant is wrong on
/// purpose (it admits the ABA interleaving where a finished operation
/// re-acquires a word) and exists only so the checker can be shown to
/// catch it.
template <class Memory = AtomicMemory, bool Naive = false, class Hooks = NullHooks>
class HarrisEngine {
 public:
  using Codec = WordCodec<2>;
  using memory_type = Memory;
  static constexpr unsigned kMcasTag = 1;
  static constexpr unsigned kRdcssTag = 2;

  explicit HarrisEngine(const McasConfig& cfg, std::span<const Value> initial = {},
                        Hooks hooks = {})
      : cfg_(cfg),
        layout_(layout_for(cfg)),
        memory_(std::make_unique<Memory>(layout_.total_words(), cfg.reclamation.max_threads)),
        hooks_(std::move(hooks)),
        counters_(std::make_unique<ThreadCounters[]>(cfg.reclamation.max_threads)),
        free_mcas_(cfg.reclamation.max_threads, cfg.descriptors_per_thread),
        free_rdcss_(cfg.reclamation.max_threads, rdcss_per_thread(cfg),
                    static_cast<std::uint32_t>(layout_.descriptor_count)),
        reclaimer_(*this, cfg.reclamation),
        generation_(std::make_unique<std::atomic<std::uint64_t>[]>(layout_.descriptor_count)) {
    if (cfg.max_width == 0 || cfg.arena_words == 0) throw ContractError("invalid configuration");
    if (initial.size() > layout_.arena_words) throw ContractError("more initial values than arena words");
    layout_.write_meta(*memory_);
    for (std::size_t a = 0; a < layout_.arena_words; ++a) {
      memory_->store(layout_.arena_addr(a),
                     Codec::encode_value(a < initial.size() ? initial[a] : 0).raw);
    }
  }

  HarrisEngine(const HarrisEngine&) = delete;
  HarrisEngine& operator=(const HarrisEngine&) = delete;

  ThreadSlot register_thread() { return reclaimer_.register_thread(); }

  DescriptorRef make_descriptor(ThreadSlot s, std::span<const WordEntry> entries) {
    auto sorted = sorted_entries<Codec>(entries, layout_.arena_words, layout_.max_width);
    auto d = allocate(s, free_mcas_);
    auto& mem = *memory_;
    const auto n = static_cast<unsigned>(sorted.size());
    for (unsigned i = 0; i < n; ++i) {
      mem.store(layout_.field_addr(d, i, 0), sorted[i].address);
      mem.store(layout_.field_addr(d, i, 1), Codec::encode_value(sorted[i].old_value).raw);
      mem.store(layout_.field_addr(d, i, 2), Codec::encode_value(sorted[i].new_value).raw);
    }
    mem.store(layout_.count_addr(d), n);
    mem.store(layout_.status_addr(d), McasStatus{StatusCode::active, false}.raw());
    auto gen = generation_[d.index].fetch_add(1) + 1;
    hooks_.on_make(s.id, d, gen);
    return d;
  }

  DescriptorRef make_descriptor(ThreadSlot s, std::initializer_list<WordEntry> entries) {
    return make_descriptor(s, std::span<const WordEntry>(entries.begin(), entries.size()));
  }

  bool execute(ThreadSlot s, DescriptorRef d) {
    if (d.index >= layout_.descriptor_count || status(d).code != StatusCode::active) {
      throw ContractError("descriptor submitted twice or not built by make_descriptor");
    }
    reclaimer_.epoch_enter(s);
    auto& c = counters_[s.id];
    ++c.mcas_calls;
    bool ok = casn(s, d, 0);
    if (ok) ++c.mcas_successes;
    hooks_.on_return(*this, s.id, d, ok);
    reclaimer_.epoch_exit(s);
    return ok;
  }

  Value read(ThreadSlot s, std::size_t address) {
    check_address(address);
    reclaimer_.epoch_enter(s);
    auto& c = counters_[s.id];
    ++c.reads;
    Value v = 0;
    for (;;) {
      auto w = rdcss_read(s, address);
      if (is_mcas_handle(w)) {
        ++c.helps;
        casn(s, parent_of(w), 1);
        continue;
      }
      v = Codec::decode_value(w);
      break;
    }
    reclaimer_.epoch_exit(s);
    return v;
  }

  /// Restricted double-compare single-swap: installs `data_new` at arena
  /// word `address` iff it holds `data_expect` and the word at
  /// `control_addr` holds `control_expect`. Returns the content observed
  /// by the installing CAS. Caller must be inside an epoch.
  TaggedWord rdcss(ThreadSlot s, std::size_t control_addr, std::uint64_t control_expect,
                   std::size_t address, TaggedWord data_expect, TaggedWord data_new) {
    auto& mem = *memory_;
    auto& c = counters_[s.id];
    auto r = allocate(s, free_rdcss_);
    const auto aux = aux_index(r);
    const auto data_addr = layout_.arena_addr(address);
    mem.store(layout_.aux_addr(aux, 0), control_addr);
    mem.store(layout_.aux_addr(aux, 1), control_expect);
    mem.store(layout_.aux_addr(aux, 2), data_addr);
    mem.store(layout_.aux_addr(aux, 3), data_expect.raw);
    mem.store(layout_.aux_addr(aux, 4), data_new.raw);
    const auto mine = Codec::encode_handle(Codec::handle_for(aux), kRdcssTag);
    for (;;) {
      auto observed = data_expect.raw;
      ++c.cas;
      if (mem.cas(data_addr, observed, mine.raw)) {
        hooks_.on_word_cas(s.id, address, false, true, WriteKind::rdcss_install);
        complete(s, aux);
        reclaimer_.retire_for_cleanup(s, r);
        return data_expect;
      }
      TaggedWord seen{observed};
      if (Codec::tag(seen) == kRdcssTag) {
        complete(s, Codec::id_of(Codec::decode_handle(seen)));
        continue;
      }
      free_rdcss_.push(r);  // never published
      return seen;
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

  TaggedWord handle_word(DescriptorRef d, unsigned slot) const {
    return Codec::encode_handle(Codec::handle_for(layout_.word_id(d, slot)), kMcasTag);
  }

  TaggedWord raw_word(std::size_t address) const {
    check_address(address);
    return TaggedWord{memory_->load(layout_.arena_addr(address))};
  }

  Value peek(std::size_t address) const {
    auto w = raw_word(address);
    if (Codec::tag(w) == 0) return Codec::decode_value(w);
    if (Codec::tag(w) == kRdcssTag) {
      auto aux = Codec::id_of(Codec::decode_handle(w));
      return Codec::decode_value(TaggedWord{memory_->load(layout_.aux_addr(aux, 3))});
    }
    auto d = parent_of(w);
    auto wd = word_descriptor(d, layout_.slot_of(Codec::id_of(Codec::decode_handle(w))));
    return Codec::decode_value(status(d).code == StatusCode::successful ? wd.new_word
                                                                        : wd.old_word);
  }

  std::size_t arena_handles() const {
    std::size_t refs = 0;
    for (std::size_t a = 0; a < layout_.arena_words; ++a) {
      if (Codec::tag(TaggedWord{memory_->load(layout_.arena_addr(a))}) != 0) ++refs;
    }
    return refs;
  }

  std::size_t arena_references(DescriptorRef d) const {
    std::size_t refs = 0;
    for (std::size_t a = 0; a < layout_.arena_words; ++a) {
      auto w = TaggedWord{memory_->load(layout_.arena_addr(a))};
      if (is_mcas_handle(w) && parent_of(w) == d) ++refs;
    }
    return refs;
  }

  void initialize_word(ThreadSlot, std::size_t address, Value v) {
    check_address(address);
    auto addr = layout_.arena_addr(address);
    if (Codec::tag(TaggedWord{memory_->load(addr)}) != 0) {
      throw ContractError("initialize_word on a word that holds a descriptor handle");
    }
    memory_->store(addr, Codec::encode_value(v).raw);
  }

  std::uint64_t generation(DescriptorRef d) const { return generation_[d.index].load(); }
  ThreadCounters& counters(ThreadSlot s) { return counters_[s.id]; }
  const ThreadCounters& counters(ThreadSlot s) const { return counters_[s.id]; }
  ThreadCounters total_counters() const {
    ThreadCounters sum;
    for (unsigned i = 0; i < reclaimer_.epochs().registered(); ++i) sum += counters_[i];
    return sum;
  }
  Reclaimer<HarrisEngine>& reclamation() noexcept { return reclaimer_; }
  Memory& memory() noexcept { return *memory_; }
  const Memory& memory() const noexcept { return *memory_; }
  const PoolLayout& layout() const noexcept { return layout_; }
  const McasConfig& config() const noexcept { return cfg_; }
  std::size_t arena_words() const noexcept { return layout_.arena_words; }
  Hooks& hooks() noexcept { return hooks_; }
  void drain() { reclaimer_.drain(); }

  // Reclaimer client interface. RDCSS records occupy the index range
  // after the MCAS descriptors.
  bool is_finalized(DescriptorRef d) const {
    return is_rdcss_ref(d) || status(d).finalized();
  }

  std::size_t detach(ThreadSlot s, DescriptorRef d) {
    if (is_rdcss_ref(d)) return 0;
    // The unlock phase has already run; this only catches stragglers.
    auto st = status(d);
    auto& c = counters_[s.id];
    std::size_t issued = 0;
    for (unsigned i = 0; i < word_count(d); ++i) {
      auto wd = word_descriptor(d, i);
      auto addr = layout_.arena_addr(wd.address);
      auto expected = handle_word(d, i).raw;
      if (memory_->load(addr) != expected) continue;
      ++issued;
      ++c.detach_cas;
      auto fin = st.code == StatusCode::successful ? wd.new_word : wd.old_word;
      if (memory_->cas(addr, expected, fin.raw)) {
        hooks_.on_word_cas(s.id, wd.address, true, false, WriteKind::detach);
      }
    }
    if constexpr (Hooks::kScanAfterDetach) {
      hooks_.on_detached(s.id, d, generation(d), arena_references(d));
    }
    return issued;
  }

  void before_reclaim(ThreadSlot) {}

  void reclaim(ThreadSlot, DescriptorRef d) {
    if (is_rdcss_ref(d)) {
      free_rdcss_.push(d);
      return;
    }
    if (cfg_.reclamation.poison_reclaimed) memory_->store(layout_.status_addr(d), kPoisonStatus);
    free_mcas_.push(d);
  }

 private:
  static std::size_t rdcss_per_thread(const McasConfig& cfg) {
    return cfg.descriptors_per_thread * cfg.max_width;
  }

  static PoolLayout layout_for(const McasConfig& cfg) {
    PoolLayout l;
    l.arena_words = cfg.arena_words;
    l.max_width = cfg.max_width;
    l.descriptor_count = cfg.descriptors_per_thread * cfg.reclamation.max_threads;
    l.aux_count = rdcss_per_thread(cfg) * cfg.reclamation.max_threads;
    return l;
  }

  void check_address(std::size_t a) const {
    if (a >= layout_.arena_words) {
      throw ContractError("address " + std::to_string(a) + " outside the arena");
    }
  }

  bool is_rdcss_ref(DescriptorRef d) const { return d.index >= layout_.descriptor_count; }
  std::size_t aux_index(DescriptorRef r) const { return r.index - layout_.descriptor_count; }

  static bool is_mcas_handle(TaggedWord w) { return Codec::tag(w) == kMcasTag; }

  DescriptorRef parent_of(TaggedWord handle) const {
    return layout_.parent_of(Codec::id_of(Codec::decode_handle(handle)));
  }

  DescriptorRef allocate(ThreadSlot s, DescriptorFreeList& pool) {
    for (std::size_t spins = 0;; ++spins) {
      if (auto d = pool.pop(s.id)) return *d;
      if (spins >= cfg_.allocation_spins) {
        throw CapacityError("descriptor pool exhausted for thread " + std::to_string(s.id));
      }
      reclaimer_.quiescence_scan(s);
      memory_->pause();
    }
  }

  void complete(ThreadSlot s, std::uint64_t aux) {
    auto& mem = *memory_;
    auto& c = counters_[s.id];
    const auto control_addr = mem.load(layout_.aux_addr(aux, 0));
    const auto control_expect = mem.load(layout_.aux_addr(aux, 1));
    const auto data_addr = mem.load(layout_.aux_addr(aux, 2));
    const TaggedWord data_expect{mem.load(layout_.aux_addr(aux, 3))};
    const TaggedWord data_new{mem.load(layout_.aux_addr(aux, 4))};
    const bool install = mem.load(control_addr) == control_expect;
    auto expected = Codec::encode_handle(Codec::handle_for(aux), kRdcssTag).raw;
    auto desired = install ? data_new : data_expect;
    ++c.cas;
    if (mem.cas(data_addr, expected, desired.raw)) {
      const auto address = data_addr - layout_.arena_base();
      hooks_.on_word_cas(s.id, address, true, install, WriteKind::rdcss_complete);
      if (install) {
        auto d = parent_of(data_new);
        hooks_.on_acquire(s.id, d, generation(d), address);
      }
    }
  }

  TaggedWord rdcss_read(ThreadSlot s, std::size_t address) {
    for (;;) {
      TaggedWord w{memory_->load(layout_.arena_addr(address))};
      if (Codec::tag(w) != kRdcssTag) return w;
      complete(s, Codec::id_of(Codec::decode_handle(w)));
    }
  }

  TaggedWord plain_cas(ThreadSlot s, DescriptorRef d, std::size_t address, TaggedWord expect,
                       TaggedWord desired) {
    auto observed = expect.raw;
    ++counters_[s.id].cas;
    if (memory_->cas(layout_.arena_addr(address), observed, desired.raw)) {
      hooks_.on_word_cas(s.id, address, false, true, WriteKind::acquire);
      hooks_.on_acquire(s.id, d, generation(d), address);
      return expect;
    }
    return TaggedWord{observed};
  }

  bool casn(ThreadSlot s, DescriptorRef d, unsigned depth) {
    auto& mem = *memory_;
    auto& c = counters_[s.id];
    c.max_help_depth = std::max<std::uint64_t>(c.max_help_depth, depth);
    const auto status_addr = layout_.status_addr(d);
    const auto active = McasStatus{StatusCode::active, false}.raw();
    const auto n = word_count(d);
    bool finalized_by_me = false;

    if (status_code(mem.load(status_addr)) == StatusCode::active) {
      auto outcome = StatusCode::successful;
      for (unsigned i = 0; i < n && outcome == StatusCode::successful; ++i) {
        const auto wd = word_descriptor(d, i);
        const auto mine = handle_word(d, i);
        for (;;) {
          TaggedWord seen;
          if constexpr (Naive) {
            seen = plain_cas(s, d, wd.address, wd.old_word, mine);
          } else {
            seen = rdcss(s, status_addr, active, wd.address, wd.old_word, mine);
          }
          if (is_mcas_handle(seen)) {
            auto other = parent_of(seen);
            if (other == d) break;
            ++c.helps;
            casn(s, other, depth + 1);
            continue;
          }
          if (seen != wd.old_word) outcome = StatusCode::failed;
          break;
        }
      }
      auto expected = active;
      auto desired = McasStatus{outcome, false}.raw();
      ++c.cas;
      if (mem.cas(status_addr, expected, desired)) {
        hooks_.on_status_cas(s.id, d, generation(d), active, desired);
        hooks_.on_finalized(*this, s.id, d);
        finalized_by_me = true;
      }
    }

    const bool success = status_code(mem.load(status_addr)) == StatusCode::successful;
    for (unsigned i = 0; i < n; ++i) {
      const auto wd = word_descriptor(d, i);
      auto expected = handle_word(d, i).raw;
      ++c.cas;
      if (mem.cas(layout_.arena_addr(wd.address), expected,
                  (success ? wd.new_word : wd.old_word).raw)) {
        hooks_.on_word_cas(s.id, wd.address, true, false, WriteKind::unlock);
      }
    }
    if (finalized_by_me) reclaimer_.retire_for_cleanup(s, d);
    return success;
  }

  McasConfig cfg_;
  PoolLayout layout_;
  std::unique_ptr<Memory> memory_;
  [[no_unique_address]] Hooks hooks_;
  std::unique_ptr<ThreadCounters[]> counters_;
  DescriptorFreeList free_mcas_;
  DescriptorFreeList free_rdcss_;
  Reclaimer<HarrisEngine> reclaimer_;
  std::unique_ptr<std::atomic<std::uint64_t>[]> generation_;
};

template <class Hooks = NullHooks>
using HarrisMcas = HarrisEngine<AtomicMemory, false, Hooks>;

/// Harris with RDCSS replaced by CAS. Broken by construction; test-only.
template <class Hooks = NullHooks>
using NaiveHarrisMcas = HarrisEngine<AtomicMemory, true, Hooks>;

}  // namespace mcas
