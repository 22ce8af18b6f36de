#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mcas/verify/sequential.hpp"

namespace mcas::verify {

enum class EventKind : std::uint8_t { invoke, respond };

struct HistoryEvent {
  unsigned thread = 0;
  EventKind kind = EventKind::invoke;
  Operation op;
  std::optional<OpResult> result;  // respond events only
  std::uint64_t timestamp = 0;

  friend bool operator==(const HistoryEvent&, const HistoryEvent&) = default;
};

using History = std::vector<HistoryEvent>;

class HistoryError : public std::runtime_error {
 public:
  explicit HistoryError(const std::string& what) : std::runtime_error(what) {}
};

/// An invocation matched with its response, if any.
struct OperationRecord {
  unsigned thread = 0;
  Operation op;
  std::uint64_t invoked = 0;
  std::optional<std::uint64_t> responded;
  std::optional<OpResult> result;

  bool complete() const noexcept { return responded.has_value(); }
};

/// Records events into fixed per-thread buffers. `invoke` and `respond`
/// are wait-free apart from the shared timestamp counter.
class HistoryRecorder {
 public:
  HistoryRecorder(unsigned threads, std::size_t events_per_thread)
      : buffers_(std::make_unique<Buffer[]>(threads)), threads_(threads) {
    for (unsigned t = 0; t < threads; ++t) buffers_[t].events.reserve(events_per_thread);
  }

  void invoke(unsigned tid, const Operation& op) { push(tid, EventKind::invoke, op, std::nullopt); }

  void respond(unsigned tid, const Operation& op, OpResult result) {
    push(tid, EventKind::respond, op, result);
  }

  /// Merged history ordered by timestamp. Call after all writers stopped.
  History merge() const {
    History h;
    for (unsigned t = 0; t < threads_; ++t) {
      h.insert(h.end(), buffers_[t].events.begin(), buffers_[t].events.end());
    }
    std::sort(h.begin(), h.end(),
              [](const HistoryEvent& a, const HistoryEvent& b) { return a.timestamp < b.timestamp; });
    return h;
  }

 private:
  struct alignas(64) Buffer {
    std::vector<HistoryEvent> events;
  };

  void push(unsigned tid, EventKind kind, const Operation& op, std::optional<OpResult> result) {
    if (tid >= threads_) throw HistoryError("thread id outside the recorder");
    auto& b = buffers_[tid].events;
    if (b.size() == b.capacity()) throw HistoryError("per-thread history buffer full");
    b.push_back(HistoryEvent{tid, kind, op, result, clock_.fetch_add(1)});
  }

  std::unique_ptr<Buffer[]> buffers_;
  unsigned threads_;
  std::atomic<std::uint64_t> clock_{0};
};

/// Pairs invocations with responses. Throws if a thread's events do not
/// alternate or a response names a different operation.
inline std::vector<OperationRecord> pair_operations(const History& history) {
  std::vector<OperationRecord> ops;
  std::vector<std::optional<std::size_t>> open;
  std::uint64_t last_ts = 0;
  bool first = true;
  for (const auto& e : history) {
    if (!first && e.timestamp <= last_ts) throw HistoryError("timestamps are not strictly increasing");
    first = false;
    last_ts = e.timestamp;
    if (e.thread >= open.size()) open.resize(e.thread + 1);
    auto& slot = open[e.thread];
    if (e.kind == EventKind::invoke) {
      if (slot) throw HistoryError("thread " + std::to_string(e.thread) + " invoked twice");
      slot = ops.size();
      ops.push_back(OperationRecord{e.thread, e.op, e.timestamp, std::nullopt, std::nullopt});
    } else {
      if (!slot) throw HistoryError("thread " + std::to_string(e.thread) + " responded without invoking");
      auto& rec = ops[*slot];
      if (!(rec.op == e.op)) throw HistoryError("response does not match the pending invocation");
      if (!e.result) throw HistoryError("response without a result");
      rec.responded = e.timestamp;
      rec.result = e.result;
      slot.reset();
    }
  }
  return ops;
}

// Text form, one event per line:
//   <thread> <invoke|respond> read <addr> <result|-> <timestamp>
//   <thread> <invoke|respond> mcas <addr:old:new,...> <true|false|-> <timestamp>

inline std::string format_event(const HistoryEvent& e) {
  std::ostringstream out;
  out << e.thread << ' ' << (e.kind == EventKind::invoke ? "invoke" : "respond") << ' ';
  if (const auto* r = std::get_if<ReadOp>(&e.op)) {
    out << "read " << r->address << ' ';
    if (e.result) {
      out << *e.result;
    } else {
      out << '-';
    }
  } else {
    const auto& m = std::get<McasOp>(e.op);
    out << "mcas ";
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
      const auto& w = m.entries[i];
      if (i != 0) out << ',';
      out << w.address << ':' << w.old_value << ':' << w.new_value;
    }
    out << ' ' << (e.result ? (*e.result != 0 ? "true" : "false") : "-");
  }
  out << ' ' << e.timestamp;
  return out.str();
}

inline std::string format_history(const History& h) {
  std::string s;
  for (const auto& e : h) {
    s += format_event(e);
    s += '\n';
  }
  return s;
}

namespace detail {

inline std::uint64_t parse_u64(std::string_view tok, std::size_t line) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || p != tok.data() + tok.size()) {
    throw HistoryError("line " + std::to_string(line) + ": bad number '" + std::string(tok) + "'");
  }
  return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    auto pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

}  // namespace detail

inline History parse_history(std::string_view text) {
  History h;
  std::size_t line_no = 0;
  for (auto line : detail::split(text, '\n')) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    std::vector<std::string_view> tok;
    for (auto t : detail::split(line, ' ')) {
      if (!t.empty() && t != "\r") tok.push_back(t);
    }
    if (tok.empty()) continue;
    if (tok.size() != 6) throw HistoryError("line " + std::to_string(line_no) + ": expected 6 fields");
    HistoryEvent e;
    e.thread = static_cast<unsigned>(detail::parse_u64(tok[0], line_no));
    if (tok[1] == "invoke") {
      e.kind = EventKind::invoke;
    } else if (tok[1] == "respond") {
      e.kind = EventKind::respond;
    } else {
      throw HistoryError("line " + std::to_string(line_no) + ": unknown event kind");
    }
    if (tok[2] == "read") {
      e.op = ReadOp{static_cast<std::size_t>(detail::parse_u64(tok[3], line_no))};
      if (tok[4] != "-") e.result = detail::parse_u64(tok[4], line_no);
    } else if (tok[2] == "mcas") {
      McasOp m;
      for (auto entry : detail::split(tok[3], ',')) {
        auto f = detail::split(entry, ':');
        if (f.size() != 3) throw HistoryError("line " + std::to_string(line_no) + ": bad mcas entry");
        m.entries.push_back(WordEntry{static_cast<std::size_t>(detail::parse_u64(f[0], line_no)),
                                      detail::parse_u64(f[1], line_no),
                                      detail::parse_u64(f[2], line_no)});
      }
      e.op = std::move(m);
      if (tok[4] == "true") {
        e.result = 1;
      } else if (tok[4] == "false") {
        e.result = 0;
      } else if (tok[4] != "-") {
        throw HistoryError("line " + std::to_string(line_no) + ": bad mcas result");
      }
    } else {
      throw HistoryError("line " + std::to_string(line_no) + ": unknown operation");
    }
    if ((e.kind == EventKind::respond) != e.result.has_value()) {
      throw HistoryError("line " + std::to_string(line_no) + ": result present iff respond");
    }
    e.timestamp = detail::parse_u64(tok[5], line_no);
    h.push_back(std::move(e));
  }
  return h;
}

}  // namespace mcas::verify
