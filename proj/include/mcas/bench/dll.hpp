#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mcas/reclamation.hpp"

namespace mcas::bench {

/// Sorted set of keys on a doubly-linked list whose links are MCAS words.
///
/// Node `i` owns arena words 2i (next) and 2i+1 (prev). A next word holds
/// `successor << 1 | deleted`; the low bit is the deletion marker, so
/// unlinking a node and marking it is one 3-word MCAS on (pred.next,
/// node.next, succ.prev). Insertion is one 2-word MCAS on (pred.next,
/// succ.prev). Node 0 is the head sentinel and node 1 the tail. Nodes are
/// never reused; a node whose insertion failed stays with its thread for
/// the next attempt.
template <class Engine>
class DoublyLinkedSet {
 public:
  static constexpr std::size_t kHead = 0;
  static constexpr std::size_t kTail = 1;
  static constexpr std::size_t kWordsPerNode = 2;

  /// `engine` must have at least kWordsPerNode * capacity arena words and
  /// MCAS width 3.
  DoublyLinkedSet(Engine& engine, ThreadSlot init_slot, std::size_t capacity, unsigned max_threads)
      : engine_(engine),
        capacity_(capacity),
        keys_(std::make_unique<std::atomic<std::uint64_t>[]>(capacity)),
        spare_(max_threads) {
    if (capacity < 2 || engine.arena_words() < kWordsPerNode * capacity) {
      throw CapacityError("arena too small for the requested node capacity");
    }
    engine_.initialize_word(init_slot, next_word(kHead), link(kTail, false));
    engine_.initialize_word(init_slot, prev_word(kHead), kHead);
    engine_.initialize_word(init_slot, next_word(kTail), link(kTail, false));
    engine_.initialize_word(init_slot, prev_word(kTail), kHead);
  }

  bool contains(ThreadSlot s, std::uint64_t key) {
    auto [pred, curr] = find(s, key);
    (void)pred;
    if (curr == kTail || key_of(curr) != key) return false;
    return !marked(engine_.read(s, next_word(curr)));
  }

  bool insert(ThreadSlot s, std::uint64_t key) {
    for (;;) {
      auto [pred, curr] = find(s, key);
      if (curr != kTail && key_of(curr) == key) {
        if (!marked(engine_.read(s, next_word(curr)))) return false;
        continue;  // reached through a stale link; look again
      }
      auto node = take_node(s);
      keys_[node].store(key);
      engine_.initialize_word(s, next_word(node), link(curr, false));
      engine_.initialize_word(s, prev_word(node), pred);
      auto d = engine_.make_descriptor(s, {{next_word(pred), link(curr, false), link(node, false)},
                                           {prev_word(curr), pred, node}});
      if (engine_.execute(s, d)) {
        spare_[s.id].reset();
        return true;
      }
    }
  }

  bool remove(ThreadSlot s, std::uint64_t key) {
    for (;;) {
      auto [pred, curr] = find(s, key);
      if (curr == kTail || key_of(curr) != key) return false;
      auto next = engine_.read(s, next_word(curr));
      if (marked(next)) continue;
      auto succ = target(next);
      auto d = engine_.make_descriptor(s, {{next_word(pred), link(curr, false), link(succ, false)},
                                           {next_word(curr), link(succ, false), link(succ, true)},
                                           {prev_word(succ), curr, pred}});
      if (engine_.execute(s, d)) return true;
    }
  }

  struct Audit {
    bool ok = true;
    std::size_t size = 0;
    std::string problem;
  };

  /// Full traversal check: keys strictly increasing, every reachable link
  /// unmarked, `n.next.prev == n` everywhere, and the tail is reached.
  /// Quiescent use only.
  Audit audit() const {
    Audit a;
    auto fail = [&](std::string why) {
      a.ok = false;
      a.problem = std::move(why);
      return a;
    };
    std::size_t node = kHead;
    std::optional<std::uint64_t> last_key;
    for (std::size_t hops = 0;; ++hops) {
      if (hops > capacity_) return fail("cycle in next links");
      auto next = engine_.peek(next_word(node));
      if (marked(next)) return fail("reachable node " + std::to_string(node) + " is marked deleted");
      auto succ = target(next);
      if (succ >= capacity_) return fail("link outside the node pool");
      if (engine_.peek(prev_word(succ)) != node) {
        return fail("prev link of node " + std::to_string(succ) + " does not point back");
      }
      if (succ == kTail) break;
      auto k = key_of(succ);
      if (last_key && k <= *last_key) return fail("keys not strictly increasing");
      last_key = k;
      ++a.size;
      node = succ;
    }
    return a;
  }

  /// Keys in list order. Quiescent use only.
  std::vector<std::uint64_t> keys() const {
    std::vector<std::uint64_t> out;
    for (auto n = target(engine_.peek(next_word(kHead))); n != kTail && n < capacity_;
         n = target(engine_.peek(next_word(n)))) {
      out.push_back(key_of(n));
    }
    return out;
  }

  std::size_t nodes_used() const noexcept { return std::min(next_node_.load(), capacity_); }
  std::size_t capacity() const noexcept { return capacity_; }

 private:
  static constexpr std::size_t next_word(std::size_t n) noexcept { return kWordsPerNode * n; }
  static constexpr std::size_t prev_word(std::size_t n) noexcept { return kWordsPerNode * n + 1; }
  static constexpr Value link(std::size_t n, bool deleted) noexcept {
    return (Value{n} << 1) | (deleted ? 1 : 0);
  }
  static constexpr std::size_t target(Value link) noexcept { return static_cast<std::size_t>(link >> 1); }
  static constexpr bool marked(Value link) noexcept { return (link & 1) != 0; }

  std::uint64_t key_of(std::size_t n) const noexcept { return keys_[n].load(); }

  /// Returns (pred, curr) with key(pred) < key <= key(curr), the head and
  /// tail acting as -inf and +inf.
  std::pair<std::size_t, std::size_t> find(ThreadSlot s, std::uint64_t key) {
    std::size_t pred = kHead;
    std::size_t curr = target(engine_.read(s, next_word(kHead)));
    while (curr != kTail && key_of(curr) < key) {
      pred = curr;
      curr = target(engine_.read(s, next_word(curr)));
    }
    return {pred, curr};
  }

  std::size_t take_node(ThreadSlot s) {
    auto& spare = spare_[s.id];
    if (!spare) {
      auto n = next_node_.fetch_add(1);
      if (n >= capacity_) throw CapacityError("list node pool exhausted");
      spare = n;
    }
    return *spare;
  }

  Engine& engine_;
  std::size_t capacity_;
  std::unique_ptr<std::atomic<std::uint64_t>[]> keys_;
  std::vector<std::optional<std::size_t>> spare_;
  std::atomic<std::size_t> next_node_{2};
};

}  // namespace mcas::bench
