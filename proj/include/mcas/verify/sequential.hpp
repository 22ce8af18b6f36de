#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "mcas/descriptor.hpp"
#include "mcas/tagged_word.hpp"

namespace mcas::verify {

struct ReadOp {
  std::size_t address = 0;
  friend bool operator==(const ReadOp&, const ReadOp&) = default;
};

struct McasOp {
  std::vector<WordEntry> entries;
  friend bool operator==(const McasOp&, const McasOp&) = default;
};

using Operation = std::variant<ReadOp, McasOp>;

class UnknownAddressError : public std::out_of_range {
 public:
  explicit UnknownAddressError(std::size_t a)
      : std::out_of_range("address " + std::to_string(a) + " is not part of the state") {}
};

/// Application-level contents of the arena, one value per word.
class SequentialState {
 public:
  SequentialState() = default;
  explicit SequentialState(std::vector<Value> words) : words_(std::move(words)) {}
  SequentialState(std::initializer_list<Value> words) : words_(words) {}
  explicit SequentialState(std::size_t n, Value fill = 0) : words_(n, fill) {}

  std::size_t size() const noexcept { return words_.size(); }
  Value at(std::size_t a) const {
    if (a >= words_.size()) throw UnknownAddressError(a);
    return words_[a];
  }
  void set(std::size_t a, Value v) {
    if (a >= words_.size()) throw UnknownAddressError(a);
    words_[a] = v;
  }
  const std::vector<Value>& words() const noexcept { return words_; }

  friend bool operator==(const SequentialState&, const SequentialState&) = default;

 private:
  std::vector<Value> words_;
};

/// Result encoding shared by histories and the checker: a read yields the
/// value, an MCAS yields 1 or 0.
using OpResult = std::uint64_t;

/// Applies `op` to `state` in place and returns its result.
inline OpResult apply_in_place(SequentialState& state, const Operation& op) {
  if (const auto* r = std::get_if<ReadOp>(&op)) return state.at(r->address);
  const auto& m = std::get<McasOp>(op);
  for (const auto& e : m.entries) {
    if (state.at(e.address) != e.old_value) return 0;
  }
  for (const auto& e : m.entries) state.set(e.address, e.new_value);
  return 1;
}

/// Sequential MCAS semantics: a read returns the word, an MCAS writes all
/// new values iff every word equals its expected value.
inline std::pair<SequentialState, OpResult> sequential_apply(SequentialState state,
                                                             const Operation& op) {
  auto result = apply_in_place(state, op);
  return {std::move(state), result};
}

}  // namespace mcas::verify
