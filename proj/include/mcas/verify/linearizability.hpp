#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mcas/verify/history.hpp"
#include "mcas/verify/sequential.hpp"

namespace mcas::verify {

enum class Verdict : std::uint8_t { yes, violation, inconclusive };

inline const char* to_string(Verdict v) noexcept {
  switch (v) {
    case Verdict::yes: return "yes";
    case Verdict::violation: return "violation";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "?";
}

struct CheckOptions {
  /// Search nodes explored before giving up with an inconclusive verdict.
  std::size_t node_budget = 4'000'000;
};

struct CheckResult {
  Verdict verdict = Verdict::inconclusive;
  std::vector<OperationRecord> operations;
  /// Indices into `operations` in linearization order (verdict yes).
  std::vector<std::size_t> witness;
  /// Operations around the point where every extension failed (verdict
  /// violation): the unlinearized candidates plus the earliest-responding
  /// operation that blocked them.
  std::vector<OperationRecord> window;
  std::size_t nodes = 0;
  std::string message;

  bool ok() const noexcept { return verdict == Verdict::yes; }
};

/// Re-executes `witness` through the sequential semantics and checks every
/// recorded result. Optionally also checks the final state.
inline bool replay_witness(const std::vector<OperationRecord>& ops,
                           const std::vector<std::size_t>& witness, SequentialState state,
                           const std::optional<SequentialState>& expected_final = std::nullopt) {
  std::vector<bool> used(ops.size(), false);
  for (auto i : witness) {
    if (i >= ops.size() || used[i]) return false;
    used[i] = true;
    auto r = apply_in_place(state, ops[i].op);
    if (ops[i].result && *ops[i].result != r) return false;
  }
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (ops[i].complete() && !used[i]) return false;
  }
  // Real-time order: nothing may precede an operation that finished
  // before it was invoked.
  for (std::size_t a = 0; a < witness.size(); ++a) {
    for (std::size_t b = a + 1; b < witness.size(); ++b) {
      const auto& later = ops[witness[a]];
      const auto& earlier = ops[witness[b]];
      if (earlier.responded && *earlier.responded < later.invoked) return false;
    }
  }
  return !expected_final || state == *expected_final;
}

namespace detail {

/// Wing and Gong style depth-first search for a linearization, with
/// memoization of (linearized set, state) pairs.
class LinearizationSearch {
 public:
  LinearizationSearch(std::vector<OperationRecord> ops, SequentialState initial,
                      std::optional<SequentialState> target, CheckOptions opts)
      : ops_(std::move(ops)),
        state_(std::move(initial)),
        target_(std::move(target)),
        opts_(opts),
        done_((ops_.size() + 63) / 64, 0) {
    std::stable_sort(ops_.begin(), ops_.end(),
                     [](const OperationRecord& a, const OperationRecord& b) { return a.invoked < b.invoked; });
    for (const auto& o : ops_) {
      if (o.complete()) ++complete_total_;
    }
  }

  CheckResult run() {
    CheckResult res;
    bool found = false;
    try {
      found = dfs();
    } catch (const BudgetExceeded&) {
      res.verdict = Verdict::inconclusive;
      res.nodes = nodes_;
      res.message = "search budget of " + std::to_string(opts_.node_budget) + " nodes exhausted";
      res.operations = std::move(ops_);
      return res;
    } catch (const UnknownAddressError& e) {
      res.verdict = Verdict::violation;
      res.message = e.what();
      res.operations = std::move(ops_);
      return res;
    }
    res.nodes = nodes_;
    if (found) {
      res.verdict = Verdict::yes;
      res.witness = path_;
    } else {
      res.verdict = Verdict::violation;
      res.window = window();
      res.message = target_ ? "no linearization of the pre-crash history reaches the recovered state"
                            : "no linearization is consistent with the recorded results";
    }
    res.operations = std::move(ops_);
    return res;
  }

 private:
  struct BudgetExceeded {};

  struct KeyHash {
    std::size_t operator()(const std::pair<std::uint64_t, std::uint64_t>& k) const noexcept {
      return static_cast<std::size_t>(k.first ^ (k.second * 0x9e3779b97f4a7c15ull));
    }
  };

  static std::uint64_t mix(std::uint64_t h, std::uint64_t v) noexcept {
    h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    h ^= h >> 31;
    h *= 0xbf58476d1ce4e5b9ull;
    return h ^ (h >> 29);
  }

  std::pair<std::uint64_t, std::uint64_t> key() const noexcept {
    std::uint64_t a = 0x243f6a8885a308d3ull;
    std::uint64_t b = 0x13198a2e03707344ull;
    for (auto w : done_) {
      a = mix(a, w);
      b = mix(b, ~w);
    }
    for (auto v : state_.words()) {
      a = mix(a, v);
      b = mix(b, v ^ 0xa4093822299f31d0ull);
    }
    return {a, b};
  }

  bool is_done(std::size_t i) const noexcept { return (done_[i / 64] >> (i % 64)) & 1; }
  void flip(std::size_t i) noexcept { done_[i / 64] ^= std::uint64_t{1} << (i % 64); }

  bool finished() const {
    return complete_done_ == complete_total_ && (!target_ || state_ == *target_);
  }

  bool dfs() {
    if (++nodes_ > opts_.node_budget) throw BudgetExceeded{};
    if (finished()) return true;

    while (first_ < ops_.size() && is_done(first_)) ++first_;
    const auto saved_first = first_;
    if (complete_done_ > deepest_ || !have_deepest_) {
      deepest_ = complete_done_;
      have_deepest_ = true;
      deepest_prefix_.assign(done_.begin(), done_.end());
    }

    // Candidates: not yet linearized and invoked before every unlinearized
    // operation's response.
    std::uint64_t min_resp = std::numeric_limits<std::uint64_t>::max();
    std::vector<std::size_t> candidates;
    for (std::size_t i = first_; i < ops_.size(); ++i) {
      if (is_done(i)) continue;
      if (ops_[i].invoked > min_resp) break;
      candidates.push_back(i);
      if (ops_[i].responded) min_resp = std::min(min_resp, *ops_[i].responded);
    }

    for (auto i : candidates) {
      if (ops_[i].invoked > min_resp) continue;
      const auto& rec = ops_[i];
      std::vector<std::pair<std::size_t, Value>> undo;
      if (const auto* m = std::get_if<McasOp>(&rec.op)) {
        for (const auto& e : m->entries) undo.emplace_back(e.address, state_.at(e.address));
      }
      auto r = apply_in_place(state_, rec.op);
      bool consistent = !rec.result || *rec.result == r;
      if (consistent) {
        flip(i);
        if (rec.complete()) ++complete_done_;
        if (memo_.insert(key()).second) {
          path_.push_back(i);
          if (dfs()) return true;
          path_.pop_back();
        }
        if (rec.complete()) --complete_done_;
        flip(i);
        first_ = saved_first;
      }
      for (auto it = undo.rbegin(); it != undo.rend(); ++it) state_.set(it->first, it->second);
    }
    return false;
  }

  std::vector<OperationRecord> window() const {
    std::vector<OperationRecord> out;
    auto done = [&](std::size_t i) { return (deepest_prefix_[i / 64] >> (i % 64)) & 1; };
    std::uint64_t min_resp = std::numeric_limits<std::uint64_t>::max();
    for (std::size_t i = 0; i < ops_.size(); ++i) {
      if (done(i)) continue;
      if (ops_[i].invoked > min_resp) break;
      out.push_back(ops_[i]);
      if (ops_[i].responded) min_resp = std::min(min_resp, *ops_[i].responded);
    }
    return out;
  }

  std::vector<OperationRecord> ops_;
  SequentialState state_;
  std::optional<SequentialState> target_;
  CheckOptions opts_;
  std::vector<std::uint64_t> done_;
  std::size_t first_ = 0;
  std::size_t complete_total_ = 0;
  std::size_t complete_done_ = 0;
  std::size_t nodes_ = 0;
  std::vector<std::size_t> path_;
  std::unordered_set<std::pair<std::uint64_t, std::uint64_t>, KeyHash> memo_;
  std::size_t deepest_ = 0;
  bool have_deepest_ = false;
  std::vector<std::uint64_t> deepest_prefix_;
};

}  // namespace detail

/// Searches for a total order of the operations that respects real-time
/// precedence and reproduces every recorded result. Operations without a
/// response may be placed anywhere after their invocation or left out.
inline CheckResult check_linearizable(const History& history, const SequentialState& initial,
                                      CheckOptions opts = {}) {
  std::vector<OperationRecord> ops;
  try {
    ops = pair_operations(history);
  } catch (const HistoryError& e) {
    CheckResult r;
    r.verdict = Verdict::violation;
    r.message = std::string("malformed history: ") + e.what();
    return r;
  }
  return detail::LinearizationSearch(std::move(ops), initial, std::nullopt, opts).run();
}

/// Durable linearizability after a crash: some linearization that contains
/// every completed operation, and any subset of the interrupted ones
/// consistent with real-time order, must leave exactly `recovered` behind.
/// An interrupted operation that is included sits after everything it
/// could have observed, so dependencies are included with it.
inline CheckResult check_durable(const History& pre_crash, const SequentialState& initial,
                                 const SequentialState& recovered, CheckOptions opts = {}) {
  std::vector<OperationRecord> ops;
  try {
    ops = pair_operations(pre_crash);
  } catch (const HistoryError& e) {
    CheckResult r;
    r.verdict = Verdict::violation;
    r.message = std::string("malformed history: ") + e.what();
    return r;
  }
  if (recovered.size() != initial.size()) {
    CheckResult r;
    r.verdict = Verdict::violation;
    r.message = "recovered state has a different number of words";
    return r;
  }
  return detail::LinearizationSearch(std::move(ops), initial, recovered, opts).run();
}

}  // namespace mcas::verify
