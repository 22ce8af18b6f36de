#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mcas {

/// Application-level word value, before tagging.
using Value = std::uint64_t;

/// Raised when a caller violates an API precondition (bad value, bad
/// address, parity mismatch, ...). Never raised for legal MCAS failure.
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

/// Raw content of a managed word. Either an encoded application value or
/// an encoded descriptor handle; which one is decided by the low tag bits.
struct TaggedWord {
  std::uint64_t raw = 0;

  friend constexpr bool operator==(TaggedWord, TaggedWord) = default;
};

/// Handle to a descriptor record. Handles are aligned so that their low
/// `TagBits` bits are clear, which leaves room for the tag.
struct DescriptorHandle {
  std::uint64_t bits = 0;

  friend constexpr bool operator==(DescriptorHandle, DescriptorHandle) = default;
};

/// Encoding of values and handles into a single machine word.
///
/// Values are shifted left by `TagBits`, so an application value is
/// `64 - TagBits` bits wide and 0 encodes to raw 0. A handle keeps its own
/// bits and gets the tag OR-ed in. Values that would lose their top bits
/// to the shift are rejected at the boundary.
template <unsigned TagBits>
struct WordCodec {
  static_assert(TagBits >= 1 && TagBits <= 4);

  static constexpr unsigned kTagBits = TagBits;
  static constexpr std::uint64_t kTagMask = (std::uint64_t{1} << TagBits) - 1;
  static constexpr Value kMaxValue = ~std::uint64_t{0} >> TagBits;

  static constexpr bool fits(Value v) noexcept { return v <= kMaxValue; }

  static TaggedWord encode_value(Value v) {
    if (!fits(v)) {
      throw ContractError("value " + std::to_string(v) +
                          " collides with the reserved tag bits");
    }
    return TaggedWord{v << TagBits};
  }

  static TaggedWord encode_handle(DescriptorHandle h, unsigned tag = 1) {
    if ((h.bits & kTagMask) != 0) {
      throw ContractError("descriptor handle is not tag-aligned");
    }
    if (tag == 0 || tag > kTagMask) {
      throw ContractError("invalid descriptor tag");
    }
    return TaggedWord{h.bits | tag};
  }

  static constexpr bool is_descriptor(TaggedWord w) noexcept {
    return (w.raw & kTagMask) != 0;
  }

  static constexpr unsigned tag(TaggedWord w) noexcept {
    return static_cast<unsigned>(w.raw & kTagMask);
  }

  static constexpr Value decode_value(TaggedWord w) noexcept {
    return w.raw >> TagBits;
  }

  static constexpr DescriptorHandle decode_handle(TaggedWord w) noexcept {
    return DescriptorHandle{w.raw & ~kTagMask};
  }

  /// Handle for the `id`-th descriptor record of a pool.
  static constexpr DescriptorHandle handle_for(std::uint64_t id) noexcept {
    return DescriptorHandle{id << TagBits};
  }

  static constexpr std::uint64_t id_of(DescriptorHandle h) noexcept {
    return h.bits >> TagBits;
  }
};

/// One reserved mark bit: the encoding used by the k+1 algorithm.
using MarkBitCodec = WordCodec<1>;

inline TaggedWord encode_word(Value v) { return MarkBitCodec::encode_value(v); }
inline TaggedWord encode_word(DescriptorHandle h) {
  return MarkBitCodec::encode_handle(h);
}
inline constexpr bool is_descriptor(TaggedWord w) noexcept {
  return MarkBitCodec::is_descriptor(w);
}

}  // namespace mcas
