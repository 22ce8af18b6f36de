#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcas/counters.hpp"
#include "mcas/descriptor.hpp"
#include "mcas/tagged_word.hpp"

namespace mcas {

struct ReclamationConfig {
  unsigned max_threads = 16;
  /// Retired descriptors accumulated since the last scan that trigger the
  /// next one.
  std::size_t retire_threshold = 32;
  /// Probability that a read which finds a finalized handle tries to
  /// detach it on the spot.
  double read_assist_probability = 1.0 / 256;
  std::uint64_t seed = 0x6d636173;
  /// Overwrite the status word of reclaimed descriptors with a poison
  /// pattern so that stale readers can be detected. Volatile memory only.
  bool poison_reclaimed = false;
};

/// Registered thread identity. Every engine call takes one.
struct ThreadSlot {
  unsigned id = 0;
  friend constexpr bool operator==(ThreadSlot, ThreadSlot) = default;
};

class CapacityError : public std::runtime_error {
 public:
  explicit CapacityError(const std::string& what) : std::runtime_error(what) {}
};

/// Lock-free pool of descriptor indices. Each owner pops from a private
/// list; any thread can return an index to its owner through a shared
/// Treiber stack that the owner drains wholesale, so pops never race.
class DescriptorFreeList {
 public:
  static constexpr std::uint32_t kNil = std::numeric_limits<std::uint32_t>::max();

  DescriptorFreeList(unsigned owners, std::size_t per_owner, std::uint32_t base_index = 0)
      : per_owner_(per_owner),
        base_(base_index),
        owners_(std::make_unique<Owner[]>(owners)),
        owner_count_(owners),
        next_(std::make_unique<std::atomic<std::uint32_t>[]>(owners * per_owner)) {
    for (unsigned o = 0; o < owners; ++o) {
      auto& local = owners_[o].local;
      local.reserve(per_owner);
      for (std::size_t i = per_owner; i-- > 0;) {
        local.push_back(static_cast<std::uint32_t>(base_ + o * per_owner + i));
      }
    }
  }

  std::size_t per_owner() const noexcept { return per_owner_; }
  std::size_t capacity() const noexcept { return per_owner_ * owner_count_; }
  bool contains(DescriptorRef d) const noexcept {
    return d.index >= base_ && d.index < base_ + capacity();
  }

  /// Owner-only.
  std::optional<DescriptorRef> pop(unsigned owner) {
    auto& o = owners_[owner];
    if (o.local.empty()) {
      auto head = o.shared_head.exchange(kNil);
      while (head != kNil) {
        o.local.push_back(head);
        head = next_[head - base_].load(std::memory_order_relaxed);
      }
    }
    if (o.local.empty()) return std::nullopt;
    auto idx = o.local.back();
    o.local.pop_back();
    return DescriptorRef{idx};
  }

  /// Any thread; the index goes back to the owner it was carved for.
  void push(DescriptorRef d) {
    auto& o = owners_[(d.index - base_) / per_owner_];
    auto head = o.shared_head.load();
    do {
      next_[d.index - base_].store(head, std::memory_order_relaxed);
    } while (!o.shared_head.compare_exchange_weak(head, d.index));
  }

 private:
  struct alignas(64) Owner {
    std::atomic<std::uint32_t> shared_head{kNil};
    std::vector<std::uint32_t> local;
  };

  std::size_t per_owner_;
  std::uint32_t base_;
  std::unique_ptr<Owner[]> owners_;
  unsigned owner_count_;
  std::unique_ptr<std::atomic<std::uint32_t>[]> next_;
};

/// Per-thread epoch counters. Each slot is written only by its owner and
/// read by scanners.
class EpochTable {
 public:
  explicit EpochTable(unsigned max_threads) : slots_(std::make_unique<Slot[]>(max_threads)), max_(max_threads) {}

  ThreadSlot register_thread() {
    auto id = registered_.load();
    do {
      if (id >= max_) {
        throw CapacityError("cannot register more than " + std::to_string(max_) + " threads");
      }
    } while (!registered_.compare_exchange_weak(id, id + 1));
    return ThreadSlot{id};
  }

  unsigned registered() const noexcept { return registered_.load(); }
  unsigned capacity() const noexcept { return max_; }

  void enter(ThreadSlot s) {
    auto& e = slot(s).epoch;
    auto v = e.load(std::memory_order_relaxed);
    if ((v & 1) != 0) throw ContractError("epoch_enter while already inside an epoch");
    e.store(v + 1);
  }

  void exit(ThreadSlot s) {
    auto& e = slot(s).epoch;
    auto v = e.load(std::memory_order_relaxed);
    if ((v & 1) == 0) throw ContractError("epoch_exit without a matching epoch_enter");
    e.store(v + 1);
  }

  std::uint64_t epoch(unsigned id) const { return slots_[id].epoch.load(); }
  bool in_scan(unsigned id) const { return slots_[id].in_scan.load(); }
  void set_in_scan(ThreadSlot s, bool v) { slot(s).in_scan.store(v); }

  void snapshot(std::vector<std::uint64_t>& out) const {
    auto n = registered();
    out.resize(max_);
    for (unsigned i = 0; i < n; ++i) out[i] = slots_[i].epoch.load();
  }

 private:
  struct alignas(64) Slot {
    std::atomic<std::uint64_t> epoch{0};
    std::atomic<bool> in_scan{false};
  };

  Slot& slot(ThreadSlot s) {
    if (s.id >= registered()) throw ContractError("unregistered thread slot");
    return slots_[s.id];
  }

  std::unique_ptr<Slot[]> slots_;
  unsigned max_;
  std::atomic<unsigned> registered_{0};
};

/// Epoch-based deferred cleanup of finalized descriptors.
///
/// A descriptor moves finalized -> detached -> reclaimed. Each step needs
/// every other registered thread to have been observed outside an
/// operation, or to have advanced its epoch, since the descriptor entered
/// its current list. Scans never wait: a peer stuck inside one operation
/// simply defers cleanup.
///
/// `Client` supplies the descriptor-specific actions:
///   bool        is_finalized(DescriptorRef) const
///   std::size_t detach(ThreadSlot, DescriptorRef)
///   void        before_reclaim(ThreadSlot)
///   void        reclaim(ThreadSlot, DescriptorRef)
///   ThreadCounters& counters(ThreadSlot)
template <class Client>
class Reclaimer {
 public:
  Reclaimer(Client& client, const ReclamationConfig& cfg)
      : client_(client),
        cfg_(cfg),
        epochs_(cfg.max_threads),
        lists_(std::make_unique<Lists[]>(cfg.max_threads)) {
    if (cfg.retire_threshold == 0) throw ContractError("retire threshold must be positive");
    auto p = cfg.read_assist_probability;
    if (!(p >= 0.0 && p <= 1.0)) throw ContractError("read-assist probability outside [0,1]");
    assist_always_ = p >= 1.0;
    assist_cutoff_ = static_cast<std::uint64_t>(p * 18446744073709551616.0);
    for (unsigned i = 0; i < cfg.max_threads; ++i) {
      lists_[i].rng.seed(cfg.seed ^ (0x9e3779b97f4a7c15ull * (i + 1)));
    }
  }

  const ReclamationConfig& config() const noexcept { return cfg_; }
  EpochTable& epochs() noexcept { return epochs_; }
  const EpochTable& epochs() const noexcept { return epochs_; }

  ThreadSlot register_thread() { return epochs_.register_thread(); }
  void epoch_enter(ThreadSlot s) { epochs_.enter(s); }
  void epoch_exit(ThreadSlot s) { epochs_.exit(s); }
  std::uint64_t epoch(ThreadSlot s) const { return epochs_.epoch(s.id); }

  /// Called by the unique finalizer of `d`.
  void retire_for_cleanup(ThreadSlot s, DescriptorRef d) {
    if (!client_.is_finalized(d)) {
      throw ContractError("retire_for_cleanup on a descriptor that is not finalized");
    }
    auto& l = lists_[s.id];
    l.finalized_new.push_back(d);
    if (++l.since_scan >= cfg_.retire_threshold) {
      l.since_scan = 0;
      quiescence_scan(s);
    }
  }

  /// Non-blocking grace-period check. Returns true when cleanup advanced.
  bool quiescence_scan(ThreadSlot s) {
    auto& l = lists_[s.id];
    auto& c = client_.counters(s);
    ++c.scans;
    epochs_.snapshot(l.current);
    const auto n = epochs_.registered();
    // A peer outside any operation (even epoch) counts as progressed.
    bool progressed = true;
    for (unsigned p = 0; p < n; ++p) {
      if (p == s.id) continue;
      auto e = l.current[p];
      if ((e & 1) == 0) continue;
      if (!l.has_snapshot || l.last_seen[p] == e) progressed = false;
    }
    l.last_seen.swap(l.current);
    l.has_snapshot = true;

    // Finalized descriptors stay in their generation so that each one
    // outlives a full grace period before it is detached.
    if (!progressed) {
      append(l.detached_old, l.detached_new);
      return false;
    }
    std::vector<DescriptorRef> to_reclaim;
    std::vector<DescriptorRef> to_detach;
    to_reclaim.swap(l.detached_old);
    l.detached_old.swap(l.detached_new);
    to_detach.swap(l.finalized_old);
    l.finalized_old.swap(l.finalized_new);

    ++c.scans_progressed;
    for (auto d : to_detach) {
      client_.detach(s, d);
      l.detached_new.push_back(d);
    }
    if (!to_reclaim.empty()) {
      client_.before_reclaim(s);
      for (auto d : to_reclaim) {
        client_.reclaim(s, d);
        ++c.reclaimed;
      }
    }
    return true;
  }

  /// Pseudo-random draw for the reader-assisted detach.
  bool draw_assist(ThreadSlot s) {
    if (assist_always_) return true;
    if (assist_cutoff_ == 0) return false;
    return lists_[s.id].rng() < assist_cutoff_;
  }

  /// Simplified scan used by readers: every other thread must be outside
  /// an operation, in the middle of its own scan, or observed to advance
  /// within a bounded wait. Detaching is allowed afterwards, recycling is
  /// not. `pause` is invoked between polls.
  template <class Pause>
  bool assist_scan(ThreadSlot s, Pause&& pause, unsigned max_polls = 64) {
    auto& l = lists_[s.id];
    epochs_.set_in_scan(s, true);
    epochs_.snapshot(l.assist);
    const auto n = epochs_.registered();
    bool ok = true;
    for (unsigned p = 0; p < n && ok; ++p) {
      if (p == s.id) continue;
      auto e = l.assist[p];
      if ((e & 1) == 0) continue;
      unsigned polls = 0;
      while (!epochs_.in_scan(p) && epochs_.epoch(p) == e) {
        if (++polls > max_polls) {
          ok = false;
          break;
        }
        pause();
      }
    }
    epochs_.set_in_scan(s, false);
    return ok;
  }

  std::size_t finalized_count(ThreadSlot s) const {
    auto& l = lists_[s.id];
    return l.finalized_old.size() + l.finalized_new.size();
  }
  std::size_t detached_count(ThreadSlot s) const {
    auto& l = lists_[s.id];
    return l.detached_old.size() + l.detached_new.size();
  }

  /// Detaches and reclaims everything. Only valid while no thread is
  /// inside an operation.
  void drain() {
    const auto n = epochs_.registered();
    for (unsigned i = 0; i < n; ++i) {
      ThreadSlot s{i};
      while (finalized_count(s) + detached_count(s) > 0) quiescence_scan(s);
    }
  }

 private:
  struct alignas(64) Lists {
    std::vector<DescriptorRef> finalized_old, finalized_new;
    std::vector<DescriptorRef> detached_old, detached_new;
    std::vector<std::uint64_t> last_seen, current, assist;
    bool has_snapshot = false;
    std::size_t since_scan = 0;
    std::mt19937_64 rng;
  };

  static void append(std::vector<DescriptorRef>& to, std::vector<DescriptorRef>& from) {
    to.insert(to.end(), from.begin(), from.end());
    from.clear();
  }

  static std::vector<DescriptorRef> take(std::vector<DescriptorRef>& a,
                                         std::vector<DescriptorRef>& b) {
    std::vector<DescriptorRef> out;
    out.swap(a);
    append(out, b);
    return out;
  }

  Client& client_;
  ReclamationConfig cfg_;
  EpochTable epochs_;
  std::unique_ptr<Lists[]> lists_;
  bool assist_always_ = false;
  std::uint64_t assist_cutoff_ = 0;
};

}  // namespace mcas
