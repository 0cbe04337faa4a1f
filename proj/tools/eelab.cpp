// eelab <subcommand> --config <path> [--seed N] [--out DIR]
//
// Each subcommand reads its inputs from DIR, writes its artifacts there and
// records them in DIR/manifest_<subcommand>.json.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "checks.hpp"
#include "eelab/flow/snapshot_io.hpp"
#include "eelab/parallel.hpp"
#include "eelab/pipeline.hpp"

namespace fs = std::filesystem;
using namespace eelab;
using nlohmann::json;

namespace {

struct MissingArtifact : Error {
  MissingArtifact(const std::string& path, const std::string& producer)
      : Error("missing-artifact", path + " not found; run `eelab " + producer + "` first") {}
};

struct Options {
  std::string config;
  std::optional<long> seed;
  std::string out = ".";
};

// State shared by every subcommand: effective config, settings and the
// manifest being assembled.
class Run {
 public:
  Run(std::string sub, const Options& o) : sub_(std::move(sub)), out_(o.out) {
    if (!o.config.empty()) cfg_ = Config::load(o.config);
    if (o.seed) cfg_.set("run.seed", std::to_string(*o.seed));
    s_ = pipeline::settings_from(cfg_);
    fs::create_directories(out_);
    manifest_["subcommand"] = sub_;
    manifest_["config_path"] = o.config;
    std::ostringstream h;
    h << std::hex << std::setw(16) << std::setfill('0') << cfg_.hash();
    manifest_["config_hash"] = h.str();
    manifest_["config"] = cfg_.canonical();
    manifest_["seed"] = s_.seed;
    manifest_["threads"] = worker_count();
    manifest_["versions"] = {{"eelab", EELAB_VERSION},
                             {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                           std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                           std::to_string(EIGEN_MINOR_VERSION)},
                             {"fft", flow::fft_library_version()},
                             {"compiler", __VERSION__}};
    manifest_["inputs"] = json::array();
    manifest_["outputs"] = json::array();
    const std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    manifest_["started"] = stamp;
    t0_ = std::chrono::steady_clock::now();
  }

  pipeline::Settings& settings() { return s_; }

  /// Path of an upstream artifact; throws naming it when absent.
  std::string input(const std::string& name, const std::string& producer) {
    const fs::path p = fs::path(out_) / name;
    if (!fs::exists(p)) throw MissingArtifact(p.string(), producer);
    manifest_["inputs"].push_back(name);
    return p.string();
  }

  /// Path for an artifact this run writes.
  std::string output(const std::string& name) {
    manifest_["outputs"].push_back(name);
    return (fs::path(out_) / name).string();
  }

  json& manifest() { return manifest_; }

  void finish() {
    manifest_["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    std::ofstream os(fs::path(out_) / ("manifest_" + sub_ + ".json"));
    os << manifest_.dump(2) << '\n';
    if (!os) throw FormatError("cannot write the manifest in " + out_);
  }

 private:
  std::string sub_, out_;
  Config cfg_;
  pipeline::Settings s_;
  json manifest_;
  std::chrono::steady_clock::time_point t0_;
};

std::string tau_tag(double tau) {
  std::ostringstream os;
  os << tau;
  return os.str();
}

std::string stem(pipeline::Precursor p, double tau) { return pipeline::to_string(p) + "_tau" + tau_tag(tau); }

constexpr pipeline::Precursor kPrecursors[] = {pipeline::Precursor::Ftle, pipeline::Precursor::Fourier};

void note(const std::string& msg) { std::cerr << "eelab: " << msg << std::endl; }

// Replay of the stored trajectory, with the run length taken from its header
// and the physical parameters checked against the config.
pipeline::Replay trajectory_replay(Run& run, const std::string& path) {
  flow::TrajectoryReader reader(path);
  const auto& h = reader.header();
  auto& s = run.settings();
  if (int(h.nx) != s.grid.nx || int(h.ny) != s.grid.ny || h.reynolds != s.flow.reynolds ||
      int(h.forcing_wavenumber) != s.flow.forcing_wavenumber ||
      std::abs(h.snapshot_dt - s.flow.snapshot_dt) > 1e-12)
    throw ConfigError("flow", path + " was written with different flow parameters");
  if (h.n_states < 2) throw InsufficientData(path + " holds fewer than two snapshots");
  s.duration = double(h.n_states - 1) * h.snapshot_dt;
  return pipeline::file_replay(path);
}

void cmd_simulate(Run& run) {
  const auto& s = run.settings();
  note("spin-up " + std::to_string(s.spinup) + ", run " + std::to_string(s.duration) + " time units");
  const auto start = pipeline::spun_up_state(s);
  flow::TrajectoryWriter writer(run.output("trajectory.kflo"), s.grid, s.flow);
  pipeline::FlowRecord rec = pipeline::record_observables(
      [&](const pipeline::Observer& obs) {
        pipeline::simulation_replay(s, start)([&](const flow::FlowState& x) {
          writer.append(x);
          obs(x);
        });
      },
      s, false);
  writer.close();
  pipeline::write_observables_csv(run.output("observables.csv"), rec);
  run.manifest()["snapshots"] = rec.size();
}

void cmd_fit_surrogate(Run& run) {
  const auto replay = trajectory_replay(run, run.input("trajectory.kflo", "simulate"));
  const auto& s = run.settings();
  const auto rec = pipeline::record_observables(replay, s);
  note("fitting K = " + std::to_string(s.K) + " on " + s.surrogate_data + " data");
  const auto fit = pipeline::fit_surrogate(rec, s);
  surrogate::save_surrogate(run.output("surrogate.qsur"), fit.fit.model);
  surrogate::write_fit_report_csv(run.output("fit_report.csv"), fit.fit);
  pipeline::write_sobolev_csv(run.output("sobolev.csv"), fit.sobolev);
  run.manifest()["training_residual_rel"] = fit.fit.total_residual_rel;
}

void cmd_otd(Run& run) {
  const auto replay = trajectory_replay(run, run.input("trajectory.kflo", "simulate"));
  const auto& s = run.settings();
  pipeline::OtdRun otd;
  if (s.otd_operator == "exact") {
    otd = pipeline::run_otd_exact(replay, s);
  } else {
    auto model = std::make_shared<const surrogate::QuadraticSurrogate>(
        surrogate::load_surrogate(run.input("surrogate.qsur", "fit-surrogate")));
    if (model->K() != s.K) throw ConfigError("surrogate.K", "does not match the stored surrogate");
    otd = pipeline::run_otd(pipeline::record_observables(replay, s), s, model);
  }
  otd::write_reduced_stream_csv(run.output("lr_stream.csv"), otd.stream);
  otd::save_basis(run.output("otd_basis.otdb"), otd.final_basis);
  for (std::size_t i = 0; i < otd.checkpoints.size(); ++i) {
    std::ostringstream name;
    name << "otd_basis_" << std::setw(5) << std::setfill('0') << i << ".otdb";
    otd::save_basis(run.output(name.str()), otd.checkpoints[i]);
  }
  run.manifest()["max_orthonormality_error"] = otd.max_orthonormality_error;
}

void cmd_ftle(Run& run) {
  const auto stream = otd::read_reduced_stream_csv(run.input("lr_stream.csv", "otd"));
  ftle::write_ftle_csv(run.output("ftle.csv"), ftle::ftle_series(stream, run.settings().window));
}

pipeline::FeatureTable load_features(Run& run) {
  auto f = pipeline::read_features_csv(run.input("features.csv", "features"));
  if (std::abs(f.sample_dt - run.settings().sample_dt) > 1e-12)
    throw ConfigError("features.sample_dt", "does not match features.csv; rerun `eelab features`");
  return f;
}

void cmd_features(Run& run) {
  const auto series = ftle::read_ftle_csv(run.input("ftle.csv", "ftle"));
  const auto rec = pipeline::read_observables_csv(run.input("observables.csv", "simulate"));
  pipeline::write_features_csv(run.output("features.csv"), pipeline::build_features(rec, series, run.settings()));
}

void cmd_train(Run& run) {
  const auto f = load_features(run);
  const auto& s = run.settings();
  for (double tau : s.taus)
    for (auto p : kPrecursors) {
      const auto e = pipeline::make_experiment(f, p, tau, s);
      note("training " + stem(p, tau) + " on " + std::to_string(e.train_ends.size()) + " windows");
      const auto res = forecaster::train(e.data, e.train_ends, s.dims, s.train);
      forecaster::save_model(run.output("model_" + stem(p, tau) + ".fcst"), res.model);
      forecaster::write_loss_csv(run.output("loss_" + stem(p, tau) + ".csv"), res.history);
    }
}

void cmd_predict(Run& run) {
  const auto& s = run.settings();
  std::map<std::string, forecaster::ForecastModel> models;
  for (double tau : s.taus)
    for (auto p : kPrecursors) models[stem(p, tau)] = forecaster::load_model(run.input("model_" + stem(p, tau) + ".fcst", "train"));
  const auto f = load_features(run);
  for (double tau : s.taus)
    for (auto p : kPrecursors) {
      const auto e = pipeline::make_experiment(f, p, tau, s);
      const auto pred = pipeline::predict_terminal(models[stem(p, tau)], e, f, e.test_ends);
      pipeline::write_predictions_csv(run.output("predictions_" + stem(p, tau) + ".csv"), pred);
    }
}

void cmd_evaluate(Run& run) {
  const auto& s = run.settings();
  // Models are checked first so a skipped `train` is reported as such.
  for (double tau : s.taus)
    for (auto p : kPrecursors) run.input("model_" + stem(p, tau) + ".fcst", "train");
  const auto f = load_features(run);
  std::ofstream summary(run.output("summary.csv"));
  summary << std::setprecision(17) << "precursor,tau,f1,auc,alpha_star,n_ee_true,n_ee_pred,tail_distance_D\n";
  for (double tau : s.taus)
    for (auto p : kPrecursors) {
      const auto e = pipeline::make_experiment(f, p, tau, s);
      const auto pred = pipeline::read_predictions_csv(run.input("predictions_" + stem(p, tau) + ".csv", "predict"));
      const auto rep = pipeline::evaluate_predictions(pred, e, f.sample_dt, s);
      evaluation::write_metric_report(run.output("metrics_" + stem(p, tau) + ".txt"), rep);
      evaluation::write_pr_csv(run.output("pr_" + stem(p, tau) + ".csv"),
                               evaluation::pr_curve(pred.truth, pred.pred, e.threshold.z_star));
      pipeline::write_pdf_csv(run.output("pdf_" + stem(p, tau) + ".csv"), pred);
      summary << pipeline::to_string(p) << ',' << tau << ',' << rep.f1 << ',' << rep.auc << ','
              << rep.alpha_star << ',' << rep.n_ee_true << ',' << rep.n_ee_pred << ','
              << rep.tail_distance_D << '\n';
    }
}

bool cmd_verify(Run& run) {
  std::ofstream report(run.output("verify.txt"));
  bool ok = true;
  for (const auto& c : checks::quick_suite()) {
    const auto o = checks::guarded(c.id, c.name, c.run);
    const std::string line = checks::format(o);
    std::cout << line << std::endl;
    report << line << '\n';
    ok = ok && o.pass;
  }
  run.manifest()["passed"] = ok;
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Extreme-event prediction lab: flow, surrogate, OTD, FTLE, forecaster and evaluation", "eelab"};
  app.require_subcommand(1);
  Options opt;
  const std::vector<std::pair<std::string, std::string>> subs = {
      {"simulate", "spin up and record a Kolmogorov flow trajectory"},
      {"fit-surrogate", "fit the quadratic surrogate on the training split"},
      {"otd", "track OTD modes and emit the reduced-operator stream"},
      {"ftle", "reduced-order FTLE over sliding windows"},
      {"features", "FTLE and Fourier precursor table aligned with D"},
      {"train", "train forecasters for every lead time and precursor"},
      {"predict", "terminal-value predictions on the test split"},
      {"evaluate", "metric reports, PR curves and PDF data"},
      {"verify", "run the oracle and property checks"}};
  for (const auto& [name, help] : subs) {
    auto* sc = app.add_subcommand(name, help);
    auto* c = sc->add_option("--config", opt.config, "flat key = value configuration file")->check(CLI::ExistingFile);
    if (name != "verify") c->required();
    sc->add_option("--seed", opt.seed, "overrides run.seed");
    sc->add_option("--out", opt.out, "artifact directory")->capture_default_str();
  }
  if (argc > 1 && argv[1][0] != '-' && !app.get_subcommand_no_throw(argv[1])) {
    std::cerr << "eelab: unknown subcommand '" << argv[1] << "'\n" << app.help();
    return 2;
  }
  CLI11_PARSE(app, argc, argv);
  const std::string sub = app.get_subcommands().front()->get_name();

  try {
    Run run(sub, opt);
    bool ok = true;
    if (sub == "simulate") cmd_simulate(run);
    else if (sub == "fit-surrogate") cmd_fit_surrogate(run);
    else if (sub == "otd") cmd_otd(run);
    else if (sub == "ftle") cmd_ftle(run);
    else if (sub == "features") cmd_features(run);
    else if (sub == "train") cmd_train(run);
    else if (sub == "predict") cmd_predict(run);
    else if (sub == "evaluate") cmd_evaluate(run);
    else ok = cmd_verify(run);
    run.finish();
    return ok ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "eelab: " << e.what() << std::endl;
    return 2;
  } catch (const MissingArtifact& e) {
    std::cerr << "eelab: " << e.what() << std::endl;
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "eelab: " << e.what() << std::endl;
    return 1;
  }
}
