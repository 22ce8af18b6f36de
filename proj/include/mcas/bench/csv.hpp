#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "mcas/bench/config.hpp"

namespace mcas::bench {

inline constexpr const char* kCsvHeader =
    "benchmark,algo,threads,size,readPct,k,seed,throughput,helpingRatio,detachingRatio,casPerOp,"
    "fencePerOp,successRate";

inline std::string csv_row(const BenchConfig& c, const BenchMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.3f,%.6f,%.6f,%.6f,%.6f,%.6f", m.throughput, m.helping_ratio,
                m.detaching_ratio, m.cas_per_op, m.fence_per_op, m.success_rate);
  std::string algo = to_string(c.algo);
  if (c.persistent) algo += "-pm";
  return std::string(to_string(c.benchmark)) + "," + algo + "," + std::to_string(c.threads) + "," +
         std::to_string(c.size) + "," + std::to_string(c.read_pct) + "," +
         (c.benchmark == Benchmark::array ? std::to_string(c.k) : std::string("3")) + "," +
         std::to_string(c.seed) + "," + buf;
}

/// Appends one row to `path`, writing the header first if the file is new
/// or empty.
inline void append_csv(const std::filesystem::path& path, const BenchConfig& c, const BenchMetrics& m) {
  std::error_code ec;
  const bool fresh = !std::filesystem::exists(path, ec) || std::filesystem::file_size(path, ec) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  if (fresh) out << kCsvHeader << '\n';
  out << csv_row(c, m) << '\n';
  if (!out) throw std::runtime_error("write to " + path.string() + " failed");
}

}  // namespace mcas::bench
