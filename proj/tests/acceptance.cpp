// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Sweep results are cached through the sweep manifest in BCJRNET_ACCEPTANCE_CACHE
// (defaults to the build tree), so a rerun only evaluates missing points.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "bcjrnet/channels.hpp"
#include "bcjrnet/config.hpp"
#include "bcjrnet/gmm.hpp"
#include "bcjrnet/harness.hpp"
#include "bcjrnet/learned_node.hpp"
#include "bcjrnet/mlp.hpp"
#include "bcjrnet/rng.hpp"
#include "bcjrnet/trellis.hpp"
#include "commands.hpp"
#include "temp_dir.hpp"

using namespace bcjrnet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  std::ostringstream ss;
  ss << std::setprecision(4) << v;
  return ss.str();
}

std::size_t jobs() {
  if (const char* j = std::getenv("BCJRNET_JOBS")) return std::max(1, std::atoi(j));
  return std::max(1u, std::thread::hardware_concurrency());
}

fs::path cache_dir() {
  if (const char* c = std::getenv("BCJRNET_ACCEPTANCE_CACHE")) return c;
  return BCJRNET_DEFAULT_CACHE;
}

// criterion 1

Outcome oracle_equivalence() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string detail;
  for (auto [family, seed] : {std::pair{ChannelFamily::IsiAwgn, 101ull}, std::pair{ChannelFamily::Poisson, 202ull}}) {
    const auto r = oracle_check(family, 100, 10, 2, seed);
    worst = std::max(worst, r.max_abs_error);
    detail += to_string(family) + " " + std::to_string(r.instances) + " instances max err " + fmt(r.max_abs_error) + "; ";
  }
  const double t = seconds_since(t0);
  return {worst < 1e-9 && t < 60.0, detail + fmt(t) + " s"};
}

// criterion 2

// Sign pattern of every ReLU pre-activation over the batch. A central
// difference is only meaningful when both stencil points share the pattern of
// the centre; otherwise the loss is piecewise over the stencil.
std::vector<bool> relu_pattern(const MlpParams& p, std::span<const double> ys) {
  std::vector<bool> pattern;
  Eigen::MatrixXd a(1, static_cast<Eigen::Index>(ys.size()));
  for (std::size_t i = 0; i < ys.size(); ++i) a(0, static_cast<Eigen::Index>(i)) = (ys[i] - p.input_mean) / p.input_scale;
  for (std::size_t l = 0; l + 1 < p.layers(); ++l) {
    Eigen::MatrixXd z = p.weight(l) * a;
    z.colwise() += p.bias(l);
    if (p.activations[l] == Activation::Relu) {
      for (Eigen::Index k = 0; k < z.size(); ++k) pattern.push_back(z.data()[k] > 0.0);
      a = z.cwiseMax(0.0);
    } else {
      a = (1.0 + (-z.array()).exp()).inverse().matrix();
    }
  }
  return pattern;
}

Outcome gradient_check() {
  Rng rng(2024);
  double worst = 0.0;
  std::size_t coordinates = 0, reduced = 0;
  for (int draw = 0; draw < 20; ++draw) {
    auto params = MlpParams::glorot(default_mlp_dims(4), default_hidden_activations(), rng.engine()());
    for (Eigen::Index i = 0; i < params.theta.size(); ++i) params.theta[i] += rng.normal(0.0, 0.05);
    const std::size_t n = 4 + rng.index(29);
    std::vector<double> y(n);
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = rng.normal(0.0, 2.0);
      labels[i] = rng.index(4);
    }
    const Batch batch{y, labels};
    const auto lg = loss_and_gradient(params, batch);
    const auto centre = relu_pattern(params, y);
    for (Eigen::Index i = 0; i < params.theta.size(); ++i) {
      double step = 1e-5;
      auto plus = params, minus = params;
      for (;;) {
        plus.theta[i] = params.theta[i] + step;
        minus.theta[i] = params.theta[i] - step;
        if (step < 1e-8 || (relu_pattern(plus, y) == centre && relu_pattern(minus, y) == centre)) break;
        step /= 10.0;
      }
      reduced += step < 1e-5;
      const double fd = (batch_loss(plus, batch) - batch_loss(minus, batch)) / (2.0 * step);
      const double denom = std::max({std::abs(fd), std::abs(lg.gradient[i]), 1e-6});
      worst = std::max(worst, std::abs(fd - lg.gradient[i]) / denom);
      ++coordinates;
    }
  }
  return {worst < 1e-4, "20 draws, 1-100-50-4, " + std::to_string(coordinates) + " coordinates, " +
                            std::to_string(reduced) + " straddled a ReLU hinge and used a smaller step, worst relative error " +
                            fmt(worst)};
}

// criterion 3

Outcome em_monotonicity() {
  Rng rng(3030);
  double worst_drop = 0.0;
  std::size_t iterations = 0;
  for (int d = 0; d < 50; ++d) {
    const std::size_t K = 1 + rng.index(8);
    const std::size_t n = 100 + rng.index(5000);
    const std::size_t centres = 1 + rng.index(6);
    std::vector<double> mu(centres), sd(centres);
    for (std::size_t c = 0; c < centres; ++c) {
      mu[c] = rng.uniform(-8.0, 8.0);
      sd[c] = rng.uniform(0.1, 3.0);
    }
    std::vector<double> x(n);
    for (double& v : x) {
      const std::size_t c = rng.index(centres);
      v = rng.normal(mu[c], sd[c]);
    }
    const auto r = em_fit(x, K);
    iterations += r.iterations;
    for (std::size_t i = 1; i < r.log_likelihood.size(); ++i)
      worst_drop = std::min(worst_drop, r.log_likelihood[i] - r.log_likelihood[i - 1]);
  }
  return {worst_drop >= -1e-9, "50 datasets, " + std::to_string(iterations) + " iterations, largest decrease " +
                                   fmt(0.0 - worst_drop)};
}

// criteria 4-6

SweepResult full_sweep(ChannelFamily family) {
  ExperimentConfig cfg;
  cfg.channel.family = family;
  cfg.jobs = jobs();
  const fs::path dir = cache_dir() / to_string(family);
  SweepOptions opt;
  opt.manifest_dir = dir;
  opt.jobs = cfg.jobs;
  opt.progress = [&](const std::string& msg) { std::cerr << to_string(family) << ": " << msg << std::endl; };
  const auto t0 = Clock::now();
  SweepResult r;
  try {
    r = run_sweep(cfg, opt);
  } catch (const std::runtime_error& e) {
    // Stale cache from a different configuration.
    std::cerr << e.what() << "; discarding cache" << std::endl;
    fs::remove_all(dir);
    r = run_sweep(cfg, opt);
  }
  std::cerr << to_string(family) << " sweep: " << r.computed_points << " new points in " << fmt(seconds_since(t0))
            << " s" << std::endl;
  std::ofstream csv(dir / "ser.csv");
  write_ser_csv(csv, r.records);
  write_ser_csv(csv, r.averages);
  return r;
}

struct Averages {
  std::vector<double> snrs;
  // (detector, scenario) -> per-snr average record
  std::map<std::pair<std::string, Scenario>, std::map<double, SerRecord>> by;
  const SerRecord& at(const std::string& det, Scenario sc, double snr) const { return by.at({det, sc}).at(snr); }
};

Averages index(const SweepResult& r) {
  Averages a;
  for (const auto& rec : r.averages) {
    a.by[{rec.detector, rec.scenario}][rec.snr_db] = rec;
    if (std::find(a.snrs.begin(), a.snrs.end(), rec.snr_db) == a.snrs.end()) a.snrs.push_back(rec.snr_db);
  }
  std::sort(a.snrs.begin(), a.snrs.end());
  return a;
}

void print_table(const std::string& name, const Averages& a) {
  std::cout << "  " << name << " average SER (perfect exact / bcjrnet, uncertain exact / bcjrnet):\n";
  for (double snr : a.snrs)
    std::cout << "    " << std::setw(5) << snr << " dB  " << std::setw(10) << a.at("exact", Scenario::Perfect, snr).ser
              << " " << std::setw(10) << a.at("bcjrnet", Scenario::Perfect, snr).ser << "  " << std::setw(10)
              << a.at("exact", Scenario::Uncertain, snr).ser << " " << std::setw(10)
              << a.at("bcjrnet", Scenario::Uncertain, snr).ser << '\n';
}

// Binomial SE of the exact detector's SER at `test_size` trials.
double se_of(double p, std::size_t test_size) { return binomial_se(p, test_size); }

Outcome tracks_exact(const Averages& a, std::size_t test_size) {
  std::size_t eligible = 0, within = 0;
  bool ratio_ok = true;
  std::string worst;
  for (double snr : a.snrs) {
    const double e = a.at("exact", Scenario::Perfect, snr).ser;
    const double b = a.at("bcjrnet", Scenario::Perfect, snr).ser;
    if (e < 1e-3) continue;
    ++eligible;
    if (b > 1.5 * e) {
      ratio_ok = false;
      worst += " ratio " + fmt(b / e) + " at " + fmt(snr) + " dB;";
    }
    if (std::abs(b - e) <= 3.0 * se_of(e, test_size)) ++within;
  }
  const bool share_ok = eligible > 0 && 10 * within >= 7 * eligible;
  return {ratio_ok && share_ok, std::to_string(eligible) + " points with exact SER >= 1e-3, " + std::to_string(within) +
                                    " within 3 SE" + (worst.empty() ? "" : ";" + worst)};
}

Outcome poisson_gap(const Averages& a) {
  const std::size_t n = a.snrs.size();
  bool ok = n >= 2;
  std::string detail;
  for (std::size_t i = 0; i < n; ++i) {
    const double snr = a.snrs[i];
    const double e = a.at("exact", Scenario::Perfect, snr).ser;
    const double b = a.at("bcjrnet", Scenario::Perfect, snr).ser;
    if (i + 2 < n) {
      if (e < 1e-3) continue;
      if (b > 1.5 * e) {
        ok = false;
        detail += " " + fmt(snr) + " dB ratio " + fmt(b / e) + " > 1.5;";
      }
    } else {
      detail += " " + fmt(snr) + " dB exact " + fmt(e) + " bcjrnet " + fmt(b) + ";";
      if (b > 5.0 * e) ok = false;
    }
  }
  return {ok, "top two points:" + detail};
}

Outcome robustness(const std::vector<std::pair<std::string, Averages>>& families, std::size_t test_size) {
  bool ok = true;
  std::string detail;
  for (const auto& [name, a] : families) {
    std::size_t eligible = 0, better = 0;
    for (double snr : a.snrs) {
      if (a.at("exact", Scenario::Perfect, snr).ser > 1e-2) continue;
      ++eligible;
      const double e = a.at("exact", Scenario::Uncertain, snr).ser;
      const double b = a.at("bcjrnet", Scenario::Uncertain, snr).ser;
      if (e - b > 3.0 * se_of(e, test_size))
        ++better;
      else
        detail += " " + name + " " + fmt(snr) + " dB exact " + fmt(e) + " bcjrnet " + fmt(b) + ";";
    }
    ok = ok && eligible > 0 && better == eligible;
    detail = name + " " + std::to_string(better) + "/" + std::to_string(eligible) + "; " + detail;
  }
  return {ok, detail};
}

// criterion 7

Outcome density_invariance() {
  std::size_t blocks = 0, differing = 0;
  for (auto [family, snr] : {std::pair{ChannelFamily::IsiAwgn, 6.0}, std::pair{ChannelFamily::Poisson, 22.0}}) {
    ExperimentConfig cfg;
    cfg.channel.family = family;
    cfg.channel.snr_db = snr;
    const auto spec = cfg.channel_spec();
    const auto trained = train_learned_detector(cfg, spec, Scenario::Perfect, 77);
    const auto constant = trained.node.with_constant_density(1.0);
    Rng rng(family == ChannelFamily::IsiAwgn ? 7001 : 7002);
    for (int b = 0; b < 100; ++b) {
      const auto x = random_symbols(spec.alphabet, 1000, rng);
      const auto y = sample_block(spec, x, rng);
      ++blocks;
      if (map_detect(y, trained.node) != map_detect(y, constant)) ++differing;
    }
  }
  return {differing == 0, std::to_string(blocks) + " blocks, " + std::to_string(differing) + " with changed decisions"};
}

// criterion 8

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Outcome determinism() {
  test_support::TempDir tmp;
  const fs::path config = tmp.path() / "small.jsonc";
  std::ofstream(config) << R"({
    "seed": 5,
    "channel": {"family": "isi_awgn", "snr_db": 4.0},
    "data": {"train_samples": 2000, "test_samples": 2000, "block_length": 500},
    "classifier": {"epochs": 10},
    "sweep": {"snr_db": [0.0, 4.0], "gamma_count": 2}
  })";

  auto run_all = [&](const fs::path& out, const std::string& jobs) {
    std::ostringstream o, e;
    const std::string c = config.string();
    const std::string d = out.string();
    auto sub = [&](const char* name) { return (out / name).string(); };
    int rc = 0;
    rc |= cli::run({"simulate", "--config", c, "--out-dir", d, "--symbols", "3000"}, o, e);
    rc |= cli::run({"train", "--config", c, "--out-dir", d}, o, e);
    rc |= cli::run({"detect", "--config", c, "--out-dir", sub("exact"), "--input", sub("dataset.csv"), "--posteriors"}, o, e);
    rc |= cli::run({"detect", "--config", c, "--out-dir", sub("learned"), "--input", sub("dataset.csv"), "--model",
                    sub("model"), "--posteriors"},
                   o, e);
    rc |= cli::run({"sweep", "--config", c, "--out-dir", sub("sweep"), "--jobs", jobs}, o, e);
    return rc;
  };
  const int rc_a = run_all(tmp.path() / "a", "1");
  const int rc_b = run_all(tmp.path() / "b", std::to_string(std::max<std::size_t>(2, jobs())));
  if (rc_a != 0 || rc_b != 0) return {false, "a command failed"};

  std::size_t compared = 0;
  std::string mismatched;
  for (const auto& entry : fs::recursive_directory_iterator(tmp.path() / "a")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), tmp.path() / "a");
    ++compared;
    if (slurp(entry.path()) != slurp(tmp.path() / "b" / rel)) mismatched += " " + rel.string();
  }
  return {compared > 0 && mismatched.empty(),
          std::to_string(compared) + " files compared" + (mismatched.empty() ? "" : ", differ:" + mismatched)};
}

}  // namespace

int main() {
  std::cout << std::boolalpha;
  bool all = true;
  auto report = [&](int n, const std::string& name, const Outcome& o) {
    std::cout << "criterion " << n << " " << name << ": " << (o.pass ? "PASS" : "FAIL") << " (" << o.detail << ")"
              << std::endl;
    all = all && o.pass;
  };
  auto guarded = [](auto&& f) -> Outcome {
    try {
      return f();
    } catch (const std::exception& e) {
      return {false, std::string("exception: ") + e.what()};
    }
  };

  report(1, "oracle equivalence", guarded(oracle_equivalence));
  report(2, "gradient correctness", guarded(gradient_check));
  report(3, "EM monotonicity", guarded(em_monotonicity));

  const ExperimentConfig defaults;
  std::vector<std::pair<std::string, Averages>> sweeps;
  std::string sweep_error;
  try {
    for (auto family : {ChannelFamily::IsiAwgn, ChannelFamily::Poisson}) {
      const auto t0 = Clock::now();
      const auto r = full_sweep(family);
      sweeps.emplace_back(to_string(family), index(r));
      print_table(to_string(family), sweeps.back().second);
      std::cout << "  " << to_string(family) << " sweep wall time " << fmt(seconds_since(t0)) << " s ("
                << r.computed_points << " points computed, rest from cache)" << std::endl;
    }
  } catch (const std::exception& e) {
    sweep_error = e.what();
  }
  if (sweeps.size() == 2) {
    report(4, "ISI-AWGN BCJRNet tracks exact BCJR", guarded([&] { return tracks_exact(sweeps[0].second, defaults.data.test_samples); }));
    report(5, "Poisson gap bounded", guarded([&] { return poisson_gap(sweeps[1].second); }));
    report(6, "robustness to CSI uncertainty", guarded([&] { return robustness(sweeps, defaults.data.test_samples); }));
  } else {
    for (int n : {4, 5, 6}) report(n, "sweep", {false, "sweep failed: " + sweep_error});
  }

  report(7, "density invariance", guarded(density_invariance));
  report(8, "determinism", guarded(determinism));
  return all ? 0 : 1;
}
