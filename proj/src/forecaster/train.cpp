#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "../binary_io.hpp"
#include "eelab/forecaster.hpp"
#include "eelab/parallel.hpp"

namespace eelab::forecaster {

ForecastDataset::ForecastDataset(MatrixXd channels, VectorXd z, VectorXd weights,
                                 const WindowSpec& spec)
    : channels_(std::move(channels)), z_(std::move(z)), w_(std::move(weights)), spec_(spec) {
  spec.validate();
  require(channels_.rows() == z_.size() && z_.size() == w_.size(),
          "precursor, observable and weight series differ in length");
}

std::vector<long> ForecastDataset::window_ends(long first, long last) const {
  first = std::max(first, 0L);
  last = std::min(last, rows());
  std::vector<long> ends;
  for (long e = first + spec_.n_lookback - 1; e + spec_.n_horizon < last; ++e) ends.push_back(e);
  return ends;
}

Sample ForecastDataset::sample(long end) const {
  const long nd = spec_.n_lookback, nl = spec_.n_label, nt = spec_.n_horizon;
  require(end - nd + 1 >= 0 && end + nt < rows(), "window does not fit in the series");
  Sample s;
  s.input = channels_.middleRows(end - nd + 1, nd);
  s.seed = VectorXd::Zero(nl + nt);
  s.seed.head(nl) = z_.segment(end - nl + 1, nl);
  s.target = z_.segment(end + 1, nt);
  s.weight = w_.segment(end + 1, nt);
  return s;
}

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

TrainResult train(const ForecastDataset& data, const std::vector<long>& ends,
                  const ModelDims& dims, const TrainConfig& cfg) {
  require(!ends.empty(), "no training windows");
  require(cfg.steps >= 1 && cfg.batch >= 1 && cfg.lr > 0.0, "invalid training configuration");
  require(cfg.final_lr_scale > 0.0 && cfg.final_lr_scale <= 1.0, "final_lr_scale must be in (0, 1]");
  TrainResult out;
  out.model = ForecastModel(dims, data.spec(), cfg.seed);
  VectorXd& th = out.model.params();
  const Eigen::Index P = th.size();
  VectorXd m = VectorXd::Zero(P), v = VectorXd::Zero(P);
  std::mt19937_64 rng(mix(cfg.seed));
  std::vector<long> order(ends);
  std::size_t cursor = order.size();
  const int B = int(std::min<std::size_t>(std::size_t(cfg.batch), ends.size()));
  MatrixXd grads(P, B);
  std::vector<double> losses(static_cast<std::size_t>(B));
  std::vector<long> batch(static_cast<std::size_t>(B));

  for (long step = 1; step <= cfg.steps; ++step) {
    for (int b = 0; b < B; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch[std::size_t(b)] = order[cursor++];
    }
    parallel_for(B, [&](int b) {
      VectorXd g = VectorXd::Zero(P);
      losses[std::size_t(b)] =
          out.model.loss(data.sample(batch[std::size_t(b)]), &g, 1.0 / B, true,
                         mix(cfg.seed ^ mix(std::uint64_t(step) * 4096 + std::uint64_t(b))));
      grads.col(b) = g;
    });
    // Fixed summation order keeps the result independent of the thread count.
    VectorXd g = VectorXd::Zero(P);
    double loss = 0.0;
    for (int b = 0; b < B; ++b) {
      g += grads.col(b);
      loss += losses[std::size_t(b)] / B;
    }
    if (!std::isfinite(loss) || !g.allFinite()) {
      std::ostringstream msg;
      msg << "non-finite loss at step " << step << " (lr = " << cfg.lr
          << "); retry with a smaller learning rate such as " << cfg.lr / 10;
      throw TrainingError(msg.str());
    }
    out.history.emplace_back(step, loss);
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg.beta1, double(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, double(step));
    const double frac = cfg.steps > 1 ? double(step - 1) / double(cfg.steps - 1) : 0.0;
    const double lr = cfg.lr * (1.0 - frac * (1.0 - cfg.final_lr_scale));
    th.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
  }
  return out;
}

VectorXd predict(const ForecastModel& model, const MatrixXd& history, const VectorXd& observed) {
  const auto& s = model.spec();
  if (history.rows() < s.n_lookback)
    throw InsufficientData("prediction needs " + std::to_string(s.n_lookback) +
                           " precursor rows, got " + std::to_string(history.rows()));
  if (observed.size() < s.n_label)
    throw InsufficientData("prediction needs " + std::to_string(s.n_label) +
                           " observed values, got " + std::to_string(observed.size()));
  VectorXd seed = VectorXd::Zero(s.decoder_length());
  seed.head(s.n_label) = observed.tail(s.n_label);
  return model.forward(history.bottomRows(s.n_lookback), seed);
}

// ---------------------------------------------------------------------------

void save_model(const std::string& path, const ForecastModel& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path);
  os.write("FCST", 4);
  io::put<std::uint32_t>(os, 1);
  const auto& d = m.dims();
  for (int x : {d.d, d.heads, d.n_enc, d.n_dec, d.d_ff, d.in_channels}) io::put<std::int32_t>(os, x);
  io::put<double>(os, d.dropout);
  const auto& s = m.spec();
  io::put<double>(os, s.tau);
  io::put<double>(os, s.sample_dt);
  for (int x : {s.n_lookback, s.n_horizon, s.n_label}) io::put<std::int32_t>(os, x);
  io::put<std::uint64_t>(os, std::uint64_t(m.params().size()));
  os.write(reinterpret_cast<const char*>(m.params().data()),
           std::streamsize(sizeof(double) * std::size_t(m.params().size())));
  if (!os) throw FormatError("write failed for " + path);
}

ForecastModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  io::expect_magic(is, "FCST", path);
  if (io::get<std::uint32_t>(is) != 1) throw FormatError(path + ": unsupported FCST version");
  ModelDims d;
  d.d = io::get<std::int32_t>(is);
  d.heads = io::get<std::int32_t>(is);
  d.n_enc = io::get<std::int32_t>(is);
  d.n_dec = io::get<std::int32_t>(is);
  d.d_ff = io::get<std::int32_t>(is);
  d.in_channels = io::get<std::int32_t>(is);
  d.dropout = io::get<double>(is);
  WindowSpec s;
  s.tau = io::get<double>(is);
  s.sample_dt = io::get<double>(is);
  s.n_lookback = io::get<std::int32_t>(is);
  s.n_horizon = io::get<std::int32_t>(is);
  s.n_label = io::get<std::int32_t>(is);
  ForecastModel m(d, s, 0);
  const auto n = io::get<std::uint64_t>(is);
  if (n != std::uint64_t(m.params().size()))
    throw FormatError(path + ": parameter count does not match the stored dimensions");
  is.read(reinterpret_cast<char*>(m.params().data()), std::streamsize(sizeof(double) * n));
  if (!is) throw FormatError(path + ": truncated parameter block");
  return m;
}

void write_loss_csv(const std::string& path, const std::vector<std::pair<long, double>>& history) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path);
  os << std::setprecision(17) << "step,loss\n";
  for (const auto& [step, loss] : history) os << step << ',' << loss << '\n';
}

}  // namespace eelab::forecaster
