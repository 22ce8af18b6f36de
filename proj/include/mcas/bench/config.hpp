#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "mcas/counters.hpp"

namespace mcas::bench {

enum class Benchmark { array, dll };
enum class Algo { aopt, harris };

inline const char* to_string(Benchmark b) noexcept { return b == Benchmark::array ? "array" : "dll"; }
inline const char* to_string(Algo a) noexcept { return a == Algo::aopt ? "aopt" : "harris"; }

class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

struct BenchConfig {
  Benchmark benchmark = Benchmark::array;
  Algo algo = Algo::aopt;
  unsigned threads = 1;
  double duration_seconds = 2.0;
  /// Array size, or key range for the list benchmark.
  std::size_t size = 1000;
  unsigned read_pct = 0;
  unsigned k = 4;
  std::uint64_t seed = 1;
  unsigned repeats = 5;
  bool persistent = false;

  /// Retired descriptors per thread before a reclamation scan.
  std::size_t retire_threshold = 2048;
  double read_assist_probability = 1.0 / 4096;
  /// When set, each worker stops after this many operations instead of
  /// running for `duration_seconds`.
  std::optional<std::size_t> ops_per_thread;
  /// Node pool of the list benchmark; 0 picks a default.
  std::size_t dll_capacity = 0;
};

inline void validate(const BenchConfig& c) {
  if (c.threads < 1) throw ConfigError("threads must be at least 1");
  if (c.read_pct > 100) throw ConfigError("read percentage must be in [0,100]");
  if (c.repeats < 1) throw ConfigError("repeats must be at least 1");
  if (!c.ops_per_thread && !(c.duration_seconds > 0)) throw ConfigError("duration must be positive");
  if (c.ops_per_thread && *c.ops_per_thread == 0) throw ConfigError("operation count must be positive");
  if (c.retire_threshold == 0) throw ConfigError("retire threshold must be positive");
  if (!(c.read_assist_probability >= 0 && c.read_assist_probability <= 1)) {
    throw ConfigError("read-assist probability must be in [0,1]");
  }
  if (c.benchmark == Benchmark::array) {
    if (c.k < 1) throw ConfigError("k must be at least 1");
    if (c.k > 64) throw ConfigError("k must be at most 64");
    if (c.size < c.k) throw ConfigError("array size must be at least k");
  } else {
    if (c.size < 2) throw ConfigError("key range must be at least 2");
  }
  if (c.persistent && c.algo == Algo::harris) {
    throw ConfigError("the harris baseline has no persistent variant");
  }
}

struct BenchMetrics {
  double throughput = 0;       // operations per second (failed MCAS attempts included)
  double helping_ratio = 0;    // ongoing MCAS operations helped / MCAS operations
  double detaching_ratio = 0;  // detach CASes / MCAS operations
  double cas_per_op = 0;       // critical-path CASes / MCAS operations
  double fence_per_op = 0;     // persistence fences on the MCAS path / MCAS operations
  double success_rate = 0;     // successful / attempted MCAS operations

  std::uint64_t operations = 0;
  std::uint64_t mcas_calls = 0;
  double seconds = 0;
  bool truncated = false;  // a worker ran out of list nodes and stopped early
};

inline ThreadCounters counter_delta(const ThreadCounters& after, const ThreadCounters& before) {
  ThreadCounters d;
  d.mcas_calls = after.mcas_calls - before.mcas_calls;
  d.mcas_successes = after.mcas_successes - before.mcas_successes;
  d.reads = after.reads - before.reads;
  d.cas = after.cas - before.cas;
  d.helps = after.helps - before.helps;
  d.dirty_helps = after.dirty_helps - before.dirty_helps;
  d.detach_cas = after.detach_cas - before.detach_cas;
  d.flushes = after.flushes - before.flushes;
  d.fences = after.fences - before.fences;
  d.aux_flushes = after.aux_flushes - before.aux_flushes;
  d.aux_fences = after.aux_fences - before.aux_fences;
  d.assist_attempts = after.assist_attempts - before.assist_attempts;
  d.scans = after.scans - before.scans;
  d.scans_progressed = after.scans_progressed - before.scans_progressed;
  d.reclaimed = after.reclaimed - before.reclaimed;
  d.poison_observed = after.poison_observed - before.poison_observed;
  d.max_help_depth = after.max_help_depth;
  return d;
}

inline BenchMetrics compute_metrics(const ThreadCounters& c, std::uint64_t operations, double seconds) {
  BenchMetrics m;
  m.operations = operations;
  m.mcas_calls = c.mcas_calls;
  m.seconds = seconds;
  m.throughput = seconds > 0 ? static_cast<double>(operations) / seconds : 0;
  if (c.mcas_calls > 0) {
    const auto n = static_cast<double>(c.mcas_calls);
    m.helping_ratio = static_cast<double>(c.helps) / n;
    m.detaching_ratio = static_cast<double>(c.detach_cas) / n;
    m.cas_per_op = static_cast<double>(c.cas) / n;
    m.fence_per_op = static_cast<double>(c.fences) / n;
    m.success_rate = static_cast<double>(c.mcas_successes) / n;
  }
  return m;
}

}  // namespace mcas::bench
