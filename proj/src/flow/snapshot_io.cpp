#include "eelab/flow/snapshot_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>

namespace eelab::flow {

static_assert(std::endian::native == std::endian::little,
              "snapshot files are written in host order; big-endian hosts unsupported");

namespace {

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("truncated snapshot file");
  return v;
}

constexpr std::streamoff kCountOffset = 4 + 4 + 4 + 4;

}  // namespace

TrajectoryWriter::TrajectoryWriter(const std::string& path, const GridSpec& grid,
                                   const FlowParams& params)
    : os_(path, std::ios::binary | std::ios::trunc), grid_(grid) {
  if (!os_) throw FormatError("cannot open " + path + " for writing");
  os_.write("KFLO", 4);
  put<std::uint32_t>(os_, kSnapshotVersion);
  put<std::uint32_t>(os_, std::uint32_t(grid.nx));
  put<std::uint32_t>(os_, std::uint32_t(grid.ny));
  put<std::uint64_t>(os_, 0);
  put<double>(os_, params.snapshot_dt);
  put<double>(os_, params.reynolds);
  put<std::uint32_t>(os_, std::uint32_t(params.forcing_wavenumber));
}

TrajectoryWriter::~TrajectoryWriter() {
  if (!closed_) {
    try {
      close();
    } catch (...) {
    }
  }
}

void TrajectoryWriter::append(const FlowState& s) {
  require(s.coeffs.size() == grid_.size(), "state size does not match file grid");
  put<double>(os_, s.time);
  os_.write(reinterpret_cast<const char*>(s.coeffs.data()),
            std::streamsize(sizeof(Complex) * std::size_t(s.coeffs.size())));
  ++count_;
}

void TrajectoryWriter::close() {
  if (closed_) return;
  os_.seekp(kCountOffset);
  put<std::uint64_t>(os_, count_);
  os_.close();
  closed_ = true;
  if (os_.fail()) throw FormatError("failed writing snapshot file");
}

TrajectoryReader::TrajectoryReader(const std::string& path)
    : is_(path, std::ios::binary) {
  if (!is_) throw FormatError("cannot open " + path);
  char magic[4];
  is_.read(magic, 4);
  if (!is_ || std::memcmp(magic, "KFLO", 4) != 0)
    throw FormatError(path + " is not a KFLO snapshot file");
  header_.version = get<std::uint32_t>(is_);
  if (header_.version != kSnapshotVersion)
    throw FormatError("unsupported snapshot version " + std::to_string(header_.version));
  header_.nx = get<std::uint32_t>(is_);
  header_.ny = get<std::uint32_t>(is_);
  header_.n_states = get<std::uint64_t>(is_);
  header_.snapshot_dt = get<double>(is_);
  header_.reynolds = get<double>(is_);
  header_.forcing_wavenumber = get<std::uint32_t>(is_);
  body_ = is_.tellg();
}

GridSpec TrajectoryReader::grid() const {
  GridSpec g;
  g.nx = int(header_.nx);
  g.ny = int(header_.ny);
  return g;
}

FlowParams TrajectoryReader::params() const {
  FlowParams p;
  p.snapshot_dt = header_.snapshot_dt;
  p.reynolds = header_.reynolds;
  p.forcing_wavenumber = int(header_.forcing_wavenumber);
  const double ratio = p.snapshot_dt / p.internal_dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio || ratio < 1.0)
    p.internal_dt = p.snapshot_dt;
  return p;
}

std::optional<FlowState> TrajectoryReader::next() {
  if (read_ >= header_.n_states) return std::nullopt;
  FlowState s;
  s.time = get<double>(is_);
  s.coeffs.resize(Eigen::Index(header_.nx) * header_.ny * 2);
  is_.read(reinterpret_cast<char*>(s.coeffs.data()),
           std::streamsize(sizeof(Complex) * std::size_t(s.coeffs.size())));
  if (!is_) throw FormatError("truncated snapshot body");
  ++read_;
  return s;
}

void TrajectoryReader::rewind() {
  is_.clear();
  is_.seekg(body_);
  read_ = 0;
}

void write_trajectory(const std::string& path, const Trajectory& t) {
  TrajectoryWriter w(path, t.grid, t.params);
  for (const auto& s : t.states) w.append(s);
  w.close();
}

Trajectory read_trajectory(const std::string& path) {
  TrajectoryReader r(path);
  Trajectory t{{}, r.params(), r.grid()};
  while (auto s = r.next()) t.states.push_back(std::move(*s));
  return t;
}

}  // namespace eelab::flow
