#pragma once

#include <atomic>
#include <cassert>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <thread>

namespace mcas {

enum class MemOp : std::uint8_t { load, store, cas, flush, fence, pause };

inline const char* to_string(MemOp op) noexcept {
  switch (op) {
    case MemOp::load: return "load";
    case MemOp::store: return "store";
    case MemOp::cas: return "cas";
    case MemOp::flush: return "flush";
    case MemOp::fence: return "fence";
    case MemOp::pause: return "pause";
  }
  return "?";
}

/// Interposition point invoked before every shared-memory access. Used by
/// the controlled scheduler and by chaos-yield stress runs; null in
/// production.
class StepHook {
 public:
  virtual ~StepHook() = default;
  virtual void before(MemOp op, std::size_t address) = 0;
};

/// Plain volatile word memory: one std::atomic per word, every access
/// sequentially consistent. flush/fence are no-ops.
class AtomicMemory {
 public:
  static constexpr bool kPersistent = false;

  explicit AtomicMemory(std::size_t words, unsigned /*max_threads*/ = 0)
      : size_(words), words_(std::make_unique<std::atomic<std::uint64_t>[]>(words)) {
    for (std::size_t i = 0; i < words; ++i) words_[i].store(0, std::memory_order_relaxed);
  }

  std::size_t size() const noexcept { return size_; }

  std::uint64_t load(std::size_t i) const {
    step(MemOp::load, i);
    return words_[i].load();
  }

  void store(std::size_t i, std::uint64_t v) {
    step(MemOp::store, i);
    words_[i].store(v);
  }

  bool cas(std::size_t i, std::uint64_t& expected, std::uint64_t desired) {
    step(MemOp::cas, i);
    return words_[i].compare_exchange_strong(expected, desired);
  }

  void flush(unsigned /*tid*/, std::size_t /*i*/) {}
  void fence(unsigned /*tid*/) {}

  /// Spin-wait hint. Routed through the hook so that a controlled
  /// scheduler can switch threads instead of deadlocking.
  void pause() const {
    if (hook_ != nullptr) {
      hook_->before(MemOp::pause, 0);
    } else {
      std::this_thread::yield();
    }
  }

  void set_step_hook(StepHook* hook) noexcept { hook_ = hook; }
  StepHook* step_hook() const noexcept { return hook_; }

 private:
  void step(MemOp op, std::size_t i) const {
    assert(i < size_);
    if (hook_ != nullptr) hook_->before(op, i);
  }

  std::size_t size_;
  std::unique_ptr<std::atomic<std::uint64_t>[]> words_;
  StepHook* hook_ = nullptr;
};

}  // namespace mcas
