#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <istream>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mcas/memory.hpp"
#include "mcas/tagged_word.hpp"

namespace mcas {

/// Persistent contents of a simulated memory at the instant of a crash.
/// Holds only persistent state; volatile values and pending flushes are
/// gone.
struct CrashImage {
  std::vector<std::uint64_t> words;
  /// First word of the descriptor pool region. Words before it are the
  /// pool metadata and the arena.
  std::uint64_t pool_offset = 0;

  friend bool operator==(const CrashImage&, const CrashImage&) = default;
};

class ImageFormatError : public std::runtime_error {
 public:
  explicit ImageFormatError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline void put_le64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), b.size());
}

inline void put_le32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), b.size());
}

inline std::uint64_t get_le(std::istream& in, int bytes) {
  std::array<unsigned char, 8> b{};
  in.read(reinterpret_cast<char*>(b.data()), bytes);
  if (!in) throw ImageFormatError("truncated crash image");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint64_t{b[i]} << (8 * i);
  return v;
}

}  // namespace detail

inline constexpr char kImageMagic[8] = {'M', 'C', 'A', 'S', 'I', 'M', 'G', '\0'};
inline constexpr std::uint32_t kImageVersion = 1;

/// Binary layout, all integers little-endian:
///   magic[8] | u32 version | u32 reserved | u64 word_count | u64 pool_offset
///   | word_count x u64
inline void write_image(std::ostream& out, const CrashImage& image) {
  out.write(kImageMagic, sizeof kImageMagic);
  detail::put_le32(out, kImageVersion);
  detail::put_le32(out, 0);
  detail::put_le64(out, image.words.size());
  detail::put_le64(out, image.pool_offset);
  for (auto w : image.words) detail::put_le64(out, w);
}

inline CrashImage read_image(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kImageMagic, sizeof magic) != 0) {
    throw ImageFormatError("bad crash image magic");
  }
  auto version = detail::get_le(in, 4);
  if (version != kImageVersion) {
    throw ImageFormatError("unsupported crash image version " + std::to_string(version));
  }
  (void)detail::get_le(in, 4);
  CrashImage image;
  auto count = detail::get_le(in, 8);
  image.pool_offset = detail::get_le(in, 8);
  if (image.pool_offset > count) throw ImageFormatError("pool offset past end of image");
  image.words.resize(count);
  for (auto& w : image.words) w = detail::get_le(in, 8);
  return image;
}

/// Word-granularity simulated persistent memory.
///
/// Each word has a volatile value (what loads, stores and CASes see) and a
/// persistent value (what survives a crash). A flush records the value and
/// write-version of a word at issue time in the calling thread's pending
/// set; a fence commits the caller's pending records. A record is only
/// committed if it is newer than what is already persistent, so the
/// persistent value never moves backwards in a word's write history.
/// CAS carries no implicit fence.
class SimMemory {
 public:
  static constexpr bool kPersistent = true;

  SimMemory(std::size_t words, unsigned max_threads)
      : size_(words), cells_(std::make_unique<Cell[]>(words)), pending_(max_threads) {}

  SimMemory(const CrashImage& image, unsigned max_threads)
      : SimMemory(image.words.size(), max_threads) {
    pool_offset_ = image.pool_offset;
    for (std::size_t i = 0; i < size_; ++i) {
      cells_[i].value.store(image.words[i], std::memory_order_relaxed);
      cells_[i].persistent = image.words[i];
    }
  }

  SimMemory(const SimMemory&) = delete;
  SimMemory& operator=(const SimMemory&) = delete;

  std::size_t size() const noexcept { return size_; }
  unsigned max_threads() const noexcept { return static_cast<unsigned>(pending_.size()); }

  std::uint64_t load(std::size_t i) const {
    step(MemOp::load, i);
    return cells_[i].value.load();
  }

  void store(std::size_t i, std::uint64_t v) {
    step(MemOp::store, i);
    auto& c = cells_[i];
    Guard g(c);
    c.value.store(v);
    ++c.version;
  }

  bool cas(std::size_t i, std::uint64_t& expected, std::uint64_t desired) {
    step(MemOp::cas, i);
    auto& c = cells_[i];
    Guard g(c);
    auto cur = c.value.load();
    if (cur != expected) {
      expected = cur;
      return false;
    }
    c.value.store(desired);
    ++c.version;
    return true;
  }

  void flush(unsigned tid, std::size_t i) {
    step(MemOp::flush, i);
    check_tid(tid);
    auto& c = cells_[i];
    Pending rec{i, 0, 0};
    {
      Guard g(c);
      rec.value = c.value.load();
      rec.version = c.version;
    }
    pending_[tid].push_back(rec);
  }

  void fence(unsigned tid) {
    step(MemOp::fence, 0);
    check_tid(tid);
    for (const auto& rec : pending_[tid]) {
      auto& c = cells_[rec.address];
      Guard g(c);
      if (rec.version >= c.persisted_version) {
        c.persistent = rec.value;
        c.persisted_version = rec.version;
      }
    }
    pending_[tid].clear();
  }

  void pause() const {
    if (hook_ != nullptr) {
      hook_->before(MemOp::pause, 0);
    } else {
      std::this_thread::yield();
    }
  }

  /// Unsolicited cache eviction: the current volatile value becomes
  /// persistent. Harness-only.
  void spontaneous_writeback(std::size_t i) {
    check_address(i);
    auto& c = cells_[i];
    Guard g(c);
    c.persistent = c.value.load();
    c.persisted_version = c.version;
  }

  /// Snapshot of persistent state without disturbing volatile state.
  CrashImage persistent_image() const {
    CrashImage image;
    image.pool_offset = pool_offset_;
    image.words.resize(size_);
    for (std::size_t i = 0; i < size_; ++i) {
      auto& c = cells_[i];
      Guard g(c);
      image.words[i] = c.persistent;
    }
    return image;
  }

  /// Full-system crash: returns the persistent snapshot and discards all
  /// volatile state, including pending flushes. The memory keeps serving
  /// its old volatile values afterwards only so that unwinding threads do
  /// not fault; it must not be used for anything else.
  CrashImage crash() {
    auto image = persistent_image();
    for (auto& p : pending_) p.clear();
    return image;
  }

  /// Volatile value without passing through the step hook.
  std::uint64_t inspect(std::size_t i) const {
    check_address(i);
    return cells_[i].value.load();
  }

  std::uint64_t persistent_value(std::size_t i) const {
    check_address(i);
    auto& c = cells_[i];
    Guard g(c);
    return c.persistent;
  }

  bool has_pending_flush(std::size_t i) const {
    for (const auto& list : pending_) {
      for (const auto& rec : list) {
        if (rec.address == i) return true;
      }
    }
    return false;
  }

  std::size_t pending_flushes(unsigned tid) const { return pending_.at(tid).size(); }

  /// Marks where the descriptor pool starts, for crash images.
  void set_pool_offset(std::size_t offset) noexcept { pool_offset_ = offset; }
  std::size_t pool_offset() const noexcept { return pool_offset_; }

  void set_step_hook(StepHook* hook) noexcept { hook_ = hook; }
  StepHook* step_hook() const noexcept { return hook_; }

 private:
  struct Cell {
    std::atomic<std::uint64_t> value{0};
    mutable std::atomic_flag lock = ATOMIC_FLAG_INIT;
    std::uint64_t version = 0;
    std::uint64_t persistent = 0;
    std::uint64_t persisted_version = 0;
  };

  struct Guard {
    explicit Guard(const Cell& c) : cell(c) {
      while (cell.lock.test_and_set(std::memory_order_acquire)) std::this_thread::yield();
    }
    ~Guard() { cell.lock.clear(std::memory_order_release); }
    const Cell& cell;
  };

  struct Pending {
    std::size_t address;
    std::uint64_t value;
    std::uint64_t version;
  };

  void check_address(std::size_t i) const {
    if (i >= size_) {
      throw ContractError("simulated address " + std::to_string(i) + " out of range");
    }
  }

  void check_tid(unsigned tid) const {
    if (tid >= pending_.size()) throw ContractError("thread id out of range for flush/fence");
  }

  void step(MemOp op, std::size_t i) const {
    check_address(i);
    if (hook_ != nullptr) hook_->before(op, i);
  }

  std::size_t size_;
  std::unique_ptr<Cell[]> cells_;
  std::vector<std::vector<Pending>> pending_;
  std::size_t pool_offset_ = 0;
  StepHook* hook_ = nullptr;
};

}  // namespace mcas
