#pragma once

#include <string_view>
#include <vector>

#include "mcas/verify/harness.hpp"
#include "mcas/verify/linearizability.hpp"
#include "mcas/verify/script.hpp"

namespace mcas::verify {

/// The ABA interleaving that breaks a Harris-style MCAS whose locking
/// phase uses a plain CAS instead of RDCSS.
///
/// Words a1 = 0 and a2 = 1 start at v1 and v2. Thread 0 runs
/// op = (a1: v1 -> v1', a2: v2 -> v2') and parks right before locking a2.
/// Thread 1 runs op' = (a1: v1' -> v1, a2: v2' -> v2), which helps op to
/// completion and then reverts both words. Thread 0 resumes; with a plain
/// CAS it locks a2 again and its unlock writes v2'. Thread 2 then reads
/// both words.
struct AbaScenario {
  static constexpr Value v1 = 1, v2 = 2, v1_new = 10, v2_new = 20;

  static std::vector<Program> programs() {
    return {
        {McasOp{{{0, v1, v1_new}, {1, v2, v2_new}}}},
        {McasOp{{{0, v1_new, v1}, {1, v2_new, v2}}}},
        {ReadOp{0}, ReadOp{1}},
    };
  }

  static constexpr std::string_view script =
      "0 until cas 1\n"
      "1 finish\n"
      "0 finish\n"
      "2 finish\n";

  static SequentialState initial() { return SequentialState({v1, v2}); }
};

struct AbaOutcome {
  CheckResult check;
  Value a1 = 0;
  Value a2 = 0;
};

/// Replays the scenario on a fresh engine built from `cfg` (two arena
/// words, three threads).
template <class Engine>
AbaOutcome run_aba_scenario(const McasConfig& cfg) {
  const auto init = AbaScenario::initial();
  Engine engine(cfg, std::span<const Value>(init.words()));
  auto history = replay_schedule(engine, AbaScenario::programs(), parse_script(AbaScenario::script));
  AbaOutcome out;
  out.check = check_linearizable(history, init);
  out.a1 = engine.peek(0);
  out.a2 = engine.peek(1);
  return out;
}

}  // namespace mcas::verify
