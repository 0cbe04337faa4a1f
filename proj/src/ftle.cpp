#include "eelab/ftle.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <Eigen/SVD>

#include "eelab/parallel.hpp"

namespace eelab::ftle {

namespace {

bool is_multiple(double a, double b) {
  const double q = a / b;
  return std::abs(q - std::round(q)) < 1e-6 && std::round(q) >= 1.0;
}

}  // namespace

void WindowConfig::validate(double sample_dt) const {
  require(horizon_T > 0.0, "ftle.horizon_T must be positive");
  require(stride > 0.0, "ftle.stride must be positive");
  require(is_multiple(horizon_T, sample_dt), "ftle.horizon_T must be a multiple of snapshot_dt");
  require(is_multiple(stride, sample_dt), "ftle.stride must be a multiple of snapshot_dt");
}

std::vector<double> FtleSeries::leading() const {
  std::vector<double> out;
  out.reserve(gammas.size());
  for (const auto& g : gammas) out.push_back(g[0]);
  return out;
}

MatrixXd otd_frame_generator(const MatrixXd& L_r) {
  MatrixXd G = L_r.triangularView<Eigen::Upper>();
  G.triangularView<Eigen::StrictlyUpper>() += L_r.transpose();
  return G;
}

MatrixXd evolve_fundamental(const otd::ReducedOperator* first, const otd::ReducedOperator* last,
                            double dt, Generator gen) {
  const auto generator = [gen](const MatrixXd& L) -> MatrixXd {
    return gen == Generator::OtdFrame ? otd_frame_generator(L) : L;
  };
  require(last - first >= 2, "window needs at least two L_r samples");
  const int r = int(first->L_r.rows());
  MatrixXd Y = MatrixXd::Identity(r, r);
  MatrixXd A1 = generator(first->L_r);
  for (const auto* seg = first; seg + 1 < last; ++seg) {
    const MatrixXd A0 = A1;
    A1 = generator((seg + 1)->L_r);
    const double span = (seg + 1)->time - seg->time;
    require(span > 0.0, "L_r samples must be strictly increasing in time");
    const int n = dt > 0.0 ? std::max(1, int(std::ceil(span / dt - 1e-9))) : 1;
    const double h = span / n;
    for (int j = 0; j < n; ++j) {
      const double a = double(j) / n, b = (j + 0.5) / n, c = (j + 1.0) / n;
      const MatrixXd La = (1 - a) * A0 + a * A1;
      const MatrixXd Lb = (1 - b) * A0 + b * A1;
      const MatrixXd Lc = (1 - c) * A0 + c * A1;
      const MatrixXd k1 = La * Y;
      const MatrixXd k2 = Lb * (Y + 0.5 * h * k1);
      const MatrixXd k3 = Lb * (Y + 0.5 * h * k2);
      const MatrixXd k4 = Lc * (Y + h * k3);
      Y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    const double nrm = Y.norm();
    if (!(nrm <= 1e150))
      throw OverflowError("fundamental matrix exceeded 1e150 in window [" +
                          std::to_string(first->time) + ", " +
                          std::to_string((last - 1)->time) + "]; shorten horizon_T");
  }
  return Y;
}

MatrixXd evolve_fundamental(const std::vector<otd::ReducedOperator>& window, double dt,
                            Generator gen) {
  return evolve_fundamental(window.data(), window.data() + window.size(), dt, gen);
}

VectorXd cauchy_green_gammas(const MatrixXd& Y, double T) {
  require(T > 0.0, "T must be positive");
  require(Y.allFinite(), "fundamental matrix must be finite");
  Eigen::JacobiSVD<MatrixXd> svd(Y);
  const VectorXd s = svd.singularValues();  // descending
  VectorXd g(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i)
    g[i] = s[i] > 0.0 ? std::log(s[i]) / T : -std::numeric_limits<double>::infinity();
  return g;
}

FtleSeries ftle_series(const std::vector<otd::ReducedOperator>& stream, const WindowConfig& cfg) {
  require(stream.size() >= 2, "L_r stream needs at least two samples");
  const double sample_dt = stream[1].time - stream[0].time;
  cfg.validate(sample_dt);
  const long span = std::lround(cfg.horizon_T / sample_dt);
  const long step = std::lround(cfg.stride / sample_dt);
  if (long(stream.size()) <= span)
    throw InsufficientData("trajectory is not longer than horizon_T");

  std::vector<long> ends;
  for (long e = span; e < long(stream.size()); e += step) ends.push_back(e);

  FtleSeries out;
  out.r = int(stream.front().L_r.rows());
  out.horizon_T = cfg.horizon_T;
  out.stride = cfg.stride;
  out.times.resize(ends.size());
  out.gammas.resize(ends.size());
  parallel_for(int(ends.size()), [&](int w) {
    const long e = ends[std::size_t(w)];
    const auto* first = stream.data() + (e - span);
    const MatrixXd Y = evolve_fundamental(first, stream.data() + e + 1, cfg.dt, cfg.generator);
    out.times[std::size_t(w)] = stream[std::size_t(e)].time;
    out.gammas[std::size_t(w)] = cauchy_green_gammas(Y, stream[std::size_t(e)].time - first->time);
  });
  return out;
}

void write_ftle_csv(const std::string& path, const FtleSeries& s) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path);
  os << std::setprecision(17);
  os << "# T=" << s.horizon_T << " r=" << s.r << " stride=" << s.stride << '\n';
  os << "time";
  for (int i = 1; i <= s.r; ++i) os << ",gamma_" << i;
  os << '\n';
  for (std::size_t w = 0; w < s.size(); ++w) {
    os << s.times[w];
    for (int i = 0; i < s.r; ++i) os << ',' << s.gammas[w][i];
    os << '\n';
  }
}

FtleSeries read_ftle_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path);
  FtleSeries s;
  std::string line;
  if (!std::getline(is, line) || line.rfind("# ", 0) != 0)
    throw FormatError(path + ": missing FTLE header comment");
  if (std::sscanf(line.c_str(), "# T=%lf r=%d stride=%lf", &s.horizon_T, &s.r, &s.stride) != 3)
    throw FormatError(path + ": malformed FTLE header comment");
  std::getline(is, line);  // column names
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    std::vector<double> v;
    while (std::getline(ls, tok, ',')) v.push_back(std::stod(tok));
    if (int(v.size()) != 1 + s.r) throw FormatError(path + ": ragged row");
    s.times.push_back(v[0]);
    s.gammas.push_back(Eigen::Map<VectorXd>(v.data() + 1, s.r));
  }
  return s;
}

}  // namespace eelab::ftle
