#include "eelab/otd.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "binary_io.hpp"

namespace eelab::otd {

VectorXd sorted_symmetric_eigenvalues(const MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(S, Eigen::EigenvaluesOnly);
  const VectorXd ev = es.eigenvalues();
  std::vector<int> order(std::size_t(ev.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return ev[a] > ev[b] + 1e-12; });
  VectorXd out(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) out[i] = ev[order[std::size_t(i)]];
  return out;
}

OtdBasis<Complex> init_basis_kolmogorov(int r, const flow::GridSpec& grid) {
  grid.validate();
  require(r >= 1 && r <= std::min(grid.nx, grid.ny) - 1, "r out of range for the grid");
  require(r <= grid.kmax_y(), "r exceeds the dealiased wavenumber range");
  OtdBasis<Complex> b;
  b.modes = MatrixXc::Zero(grid.size(), r);
  b.weight = grid.l2_weight();
  // sin(i y) = (e^{iiy} − e^{−iiy}) / 2i
  const double a = 1.0 / (M_PI * std::sqrt(2.0));
  for (int i = 1; i <= r; ++i) {
    b.modes(grid.index(0, grid.iy_of(i), 0), i - 1) = Complex(0.0, -0.5 * a);
    b.modes(grid.index(0, grid.iy_of(-i), 0), i - 1) = Complex(0.0, 0.5 * a);
  }
  return b;
}

OtdBasis<double> init_basis_generic(int r, int dim, std::uint64_t seed) {
  require(dim >= 1 && r >= 1 && r <= dim, "need 1 <= r <= dim");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  OtdBasis<double> b;
  b.modes.resize(dim, r);
  for (int j = 0; j < r; ++j)
    for (int i = 0; i < dim; ++i) b.modes(i, j) = nd(rng);
  orthonormalize(b);
  return b;
}

OtdTracker<Complex>::StateOperator exact_flow_operator(const flow::FlowParams& params,
                                                       const flow::GridSpec& grid) {
  auto solver = std::make_shared<flow::KolmogorovSolver>(grid, params);
  return [solver](const VectorXc& u, const MatrixXc& V) {
    MatrixXc out(V.rows(), V.cols());
    for (Eigen::Index j = 0; j < V.cols(); ++j) out.col(j) = solver->linearized_apply(u, V.col(j));
    return out;
  };
}

void save_basis(const std::string& path, const OtdBasis<Complex>& b) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path);
  os.write("OTDB", 4);
  io::put<std::uint32_t>(os, 1);
  io::put<std::uint32_t>(os, std::uint32_t(b.r()));
  io::put<double>(os, b.time);
  io::put<double>(os, b.weight);
  io::put<std::uint64_t>(os, std::uint64_t(b.dim()));
  io::put<std::uint32_t>(os, 2);
  os.write(reinterpret_cast<const char*>(b.modes.data()),
           std::streamsize(b.modes.size() * sizeof(Complex)));
  if (!os) throw FormatError("failed writing " + path);
}

OtdBasis<Complex> load_basis(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  io::expect_magic(is, "OTDB", path);
  if (io::get<std::uint32_t>(is) != 1) throw FormatError(path + ": unsupported OTDB version");
  OtdBasis<Complex> b;
  const auto r = io::get<std::uint32_t>(is);
  b.time = io::get<double>(is);
  b.weight = io::get<double>(is);
  const auto dim = io::get<std::uint64_t>(is);
  if (io::get<std::uint32_t>(is) != 2) throw FormatError(path + ": expected complex modes");
  b.modes.resize(Eigen::Index(dim), Eigen::Index(r));
  is.read(reinterpret_cast<char*>(b.modes.data()),
          std::streamsize(b.modes.size() * sizeof(Complex)));
  if (!is) throw FormatError("truncated basis file " + path);
  return b;
}

void write_reduced_stream_csv(const std::string& path, const std::vector<ReducedOperator>& s) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path);
  const int r = s.empty() ? 0 : int(s.front().L_r.rows());
  os << "time";
  for (int i = 1; i <= r; ++i) os << ",sigma_" << i;
  for (int i = 1; i <= r; ++i)
    for (int j = 1; j <= r; ++j) os << ",L_" << i << '_' << j;
  os << '\n' << std::setprecision(17);
  for (const auto& op : s) {
    os << op.time;
    for (int i = 0; i < r; ++i) os << ',' << op.sigma[i];
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j) os << ',' << op.L_r(i, j);
    os << '\n';
  }
}

std::vector<ReducedOperator> read_reduced_stream_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw FormatError(path + " is empty");
  const auto cols = std::count(line.begin(), line.end(), ',');
  int r = 0;
  while (r * (r + 1) < cols) ++r;
  if (r * (r + 1) != cols) throw FormatError(path + ": header does not describe an L_r stream");
  std::vector<ReducedOperator> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<double> v;
    std::string tok;
    while (std::getline(ls, tok, ',')) v.push_back(std::stod(tok));
    if (int(v.size()) != 1 + r + r * r) throw FormatError(path + ": ragged row");
    ReducedOperator op;
    op.time = v[0];
    op.L_r.resize(r, r);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j) op.L_r(i, j) = v[std::size_t(1 + r + i * r + j)];
    op.S_r = 0.5 * (op.L_r + op.L_r.transpose());
    op.sigma = sorted_symmetric_eigenvalues(op.S_r);
    out.push_back(std::move(op));
  }
  return out;
}

}  // namespace eelab::otd
