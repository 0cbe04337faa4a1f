#pragma once

// Binary trajectory files. Little-endian layout:
//   header  "KFLO" | version u32 | nx u32 | ny u32 | n_states u64 |
//           snapshot_dt f64 | reynolds f64 | forcing_wavenumber u32
//   body    per state: time f64, then nx·ny·2 complex coefficients as
//           interleaved (re, im) f64, row-major over (kx, ky, component).

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>

#include "eelab/flow/kolmogorov.hpp"

namespace eelab::flow {

inline constexpr std::uint32_t kSnapshotVersion = 1;

struct SnapshotHeader {
  std::uint32_t version = kSnapshotVersion;
  std::uint32_t nx = 0, ny = 0;
  std::uint64_t n_states = 0;
  double snapshot_dt = 0.0;
  double reynolds = 0.0;
  std::uint32_t forcing_wavenumber = 0;
};

/// Streams states to disk; the state count in the header is patched on
/// close().
class TrajectoryWriter {
 public:
  TrajectoryWriter(const std::string& path, const GridSpec& grid, const FlowParams& params);
  ~TrajectoryWriter();
  void append(const FlowState& s);
  void close();
  std::uint64_t count() const { return count_; }

 private:
  std::ofstream os_;
  GridSpec grid_;
  std::uint64_t count_ = 0;
  bool closed_ = false;
};

class TrajectoryReader {
 public:
  explicit TrajectoryReader(const std::string& path);
  const SnapshotHeader& header() const { return header_; }
  GridSpec grid() const;
  /// internal_dt is not stored; the default is used when it divides
  /// snapshot_dt, otherwise snapshot_dt itself.
  FlowParams params() const;
  std::optional<FlowState> next();
  void rewind();

 private:
  std::ifstream is_;
  SnapshotHeader header_;
  std::uint64_t read_ = 0;
  std::streampos body_;
};

void write_trajectory(const std::string& path, const Trajectory& t);
Trajectory read_trajectory(const std::string& path);

}  // namespace eelab::flow
