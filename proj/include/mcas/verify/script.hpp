#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "mcas/memory.hpp"
#include "mcas/verify/history.hpp"
#include "mcas/verify/scheduler.hpp"

namespace mcas::verify {

/// One line of a schedule script:
///   <thread> until <load|store|cas|flush|fence|pause> <addr>
///       step the thread until it is parked right before that access
///   <thread> steps <n>
///   <thread> finish
/// Addresses are arena word indices. `#` starts a comment.
struct ScriptStep {
  enum class Kind { until, steps, finish };
  unsigned thread = 0;
  Kind kind = Kind::finish;
  MemOp op = MemOp::load;
  std::size_t address = 0;
  std::size_t count = 0;
  std::size_t line = 0;
};

using Script = std::vector<ScriptStep>;

inline MemOp parse_memop(std::string_view s, std::size_t line) {
  for (auto op : {MemOp::load, MemOp::store, MemOp::cas, MemOp::flush, MemOp::fence, MemOp::pause}) {
    if (s == to_string(op)) return op;
  }
  throw ScriptError("line " + std::to_string(line) + ": unknown memory operation '" + std::string(s) + "'");
}

inline Script parse_script(std::string_view text) {
  Script script;
  std::size_t line_no = 0;
  for (auto line : detail::split(text, '\n')) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    std::vector<std::string_view> tok;
    for (auto t : detail::split(line, ' ')) {
      while (!t.empty() && (t.back() == '\r' || t.back() == '\t')) t.remove_suffix(1);
      if (!t.empty()) tok.push_back(t);
    }
    if (tok.empty()) continue;
    auto number = [&](std::string_view t) {
      try {
        return detail::parse_u64(t, line_no);
      } catch (const HistoryError& e) {
        throw ScriptError(e.what());
      }
    };
    ScriptStep st;
    st.line = line_no;
    st.thread = static_cast<unsigned>(number(tok[0]));
    if (tok.size() == 4 && tok[1] == "until") {
      st.kind = ScriptStep::Kind::until;
      st.op = parse_memop(tok[2], line_no);
      st.address = static_cast<std::size_t>(number(tok[3]));
    } else if (tok.size() == 3 && tok[1] == "steps") {
      st.kind = ScriptStep::Kind::steps;
      st.count = static_cast<std::size_t>(number(tok[2]));
    } else if (tok.size() == 2 && tok[1] == "finish") {
      st.kind = ScriptStep::Kind::finish;
    } else {
      throw ScriptError("line " + std::to_string(line_no) + ": unrecognized command");
    }
    script.push_back(st);
  }
  return script;
}

/// Drives a started scheduler through `script`, then runs every thread
/// that is still alive to completion in thread order. `arena_base` maps
/// arena indices in `until` commands to memory addresses.
inline void run_script(ControlledScheduler& sched, const Script& script, std::size_t arena_base) {
  for (const auto& st : script) {
    auto where = [&] { return "line " + std::to_string(st.line) + ": "; };
    if (st.thread >= sched.threads()) throw ScriptError(where() + "no such thread");
    if (sched.finished(st.thread)) {
      throw ScriptError(where() + "thread " + std::to_string(st.thread) + " has already completed");
    }
    switch (st.kind) {
      case ScriptStep::Kind::until: {
        const PendingStep want{st.op, arena_base + st.address};
        for (;;) {
          auto p = sched.pending(st.thread);
          if (!p) throw ScriptError(where() + "thread completed before reaching the access");
          if (*p == want) break;
          sched.step(st.thread);
        }
        break;
      }
      case ScriptStep::Kind::steps:
        for (std::size_t i = 0; i < st.count; ++i) sched.step(st.thread);
        break;
      case ScriptStep::Kind::finish:
        sched.run_to_completion(st.thread);
        break;
    }
  }
  for (unsigned t = 0; t < sched.threads(); ++t) sched.run_to_completion(t);
}

}  // namespace mcas::verify
