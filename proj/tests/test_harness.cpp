#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "bcjrnet/exact_node.hpp"
#include "bcjrnet/harness.hpp"
#include "bcjrnet/rng.hpp"
#include "enumeration.hpp"
#include "temp_dir.hpp"

using namespace bcjrnet;

namespace {

std::vector<double> noisy_block(const ChannelSpec& spec, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  const auto x = random_symbols(spec.alphabet, n, rng);
  return sample_block(spec, x, rng);
}

double max_abs_diff(const PosteriorTable& a, const PosteriorTable& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) worst = std::max(worst, std::abs(a.values[i] - b.values[i]));
  return worst;
}

// Fails on any observation above the threshold.
class FragileNode final : public FunctionNode {
 public:
  FragileNode(const ChannelSpec& spec, double threshold) : exact_(spec), threshold_(threshold) {}
  const StateSpace& state_space() const override { return exact_.state_space(); }
  double likelihood(double y, StateIndex s) const override {
    if (y > threshold_) throw std::runtime_error("observation out of range");
    return exact_.likelihood(y, s);
  }

 private:
  ExactNode exact_;
  double threshold_;
};

ExperimentConfig small_sweep_config() {
  ExperimentConfig cfg;
  cfg.channel.family = ChannelFamily::IsiAwgn;
  cfg.data.test_samples = 2000;
  cfg.data.block_length = 500;
  cfg.sweep.snr_db = std::vector<double>{2.0, 8.0};
  cfg.sweep.gamma_count = 2;
  cfg.sweep.detectors = {"exact"};
  cfg.sweep.scenarios = {Scenario::Perfect};
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("brute-force oracle") {
  SUBCASE("single symbol") {
    const auto spec = ChannelSpec::make(ChannelFamily::IsiAwgn, decay_profile(0.4, 2), 3.0);
    const StateSpace sp = spec.state_space();
    const std::vector<double> y{0.9};
    const auto post = bruteforce_map_oracle(y, spec);
    std::vector<double> m(2, 0.0);
    for (std::size_t s = 0; s < sp.size(); ++s) m[sp.newest_digit(StateIndex(s))] += awgn_likelihood(0.9, StateIndex(s), spec);
    for (std::size_t x = 0; x < 2; ++x) CHECK(post.at(0, x) == doctest::Approx(m[x] / (m[0] + m[1])).epsilon(1e-12));
  }

  SUBCASE("pairs with the sum-product engine at n = 8") {
    for (ChannelFamily fam : {ChannelFamily::IsiAwgn, ChannelFamily::Poisson}) {
      const double snr = fam == ChannelFamily::IsiAwgn ? db_to_linear(4.0) : db_to_linear(22.0);
      const auto spec = ChannelSpec::make(fam, decay_profile(0.7, 2), snr);
      const ExactNode node(spec);
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto y = noisy_block(spec, 8, seed);
        const auto oracle = bruteforce_map_oracle(y, spec);
        CHECK(max_abs_diff(oracle, symbol_posterior(y, node)) < 1e-9);

        const auto ref = enumeration::enumerate(
            {fam == ChannelFamily::IsiAwgn ? enumeration::Law::Gaussian : enumeration::Law::Poisson,
             spec.alphabet.symbols(), spec.profile.taps, spec.snr},
            y);
        for (std::size_t k = 0; k < 8; ++k)
          for (std::size_t x = 0; x < 2; ++x) CHECK(std::abs(oracle.at(k, x) - ref.symbol_posterior[k][x]) < 1e-12);
      }
    }
  }

  SUBCASE("rejects long blocks") {
    const auto spec = ChannelSpec::make(ChannelFamily::IsiAwgn, decay_profile(0.4, 2), 3.0);
    CHECK_THROWS(bruteforce_map_oracle(std::vector<double>(15, 0.0), spec));
    CHECK(bruteforce_map_oracle(std::vector<double>{}, spec).rows() == 0);
  }

  SUBCASE("random instance report") {
    for (ChannelFamily fam : {ChannelFamily::IsiAwgn, ChannelFamily::Poisson}) {
      const auto rep = oracle_check(fam, 30, 10, 2, 5);
      CHECK(rep.instances == 30);
      CHECK(rep.max_abs_error < 1e-9);
    }
  }
}

TEST_CASE("SER points") {
  SUBCASE("vanishing SNR is a coin flip") {
    const auto spec = ChannelSpec::make(ChannelFamily::IsiAwgn, decay_profile(0.5, 2), 1e-30);
    const ExactNode node(spec);
    const auto c = run_ser_point(node, spec, 50000, 1000, 3);
    CHECK(c.trials == 50000);
    CHECK(std::abs(static_cast<double>(c.errors) / c.trials - 0.5) < 0.01);
  }

  SUBCASE("high SNR is nearly error free") {
    const auto spec = ChannelSpec::make(ChannelFamily::IsiAwgn, decay_profile(0.5, 2), 100.0);
    const ExactNode node(spec);
    const auto c = run_ser_point(node, spec, 50000, 1000, 3);
    CHECK(static_cast<double>(c.errors) / c.trials < 1e-3);
  }

  SUBCASE("deterministic in the seed") {
    const auto spec = ChannelSpec::make(ChannelFamily::Poisson, decay_profile(0.5, 2), db_to_linear(18.0));
    const ExactNode node(spec);
    const auto a = run_ser_point(node, spec, 5000, 1000, 8);
    const auto b = run_ser_point(node, spec, 5000, 1000, 8);
    CHECK(a.errors == b.errors);
    CHECK(a.trials == 5000);
  }

  SUBCASE("failing blocks are counted, not fatal") {
    const auto spec = ChannelSpec::make(ChannelFamily::IsiAwgn, decay_profile(0.5, 2), 4.0);
    const FragileNode node(spec, 4.5);
    const auto c = run_ser_point(node, spec, 5000, 100, 1);
    CHECK(c.failed_blocks > 0);
    CHECK(c.failed_blocks < 50);
    CHECK(c.errors >= c.failed_blocks * 100);
    CHECK(c.trials == 5000);
  }
}

TEST_CASE("records") {
  const auto r = make_record("exact", Scenario::Perfect, 4.0, 0.5, 25, 1000);
  CHECK(r.ser == 0.025);
  CHECK(binomial_se(0.01, 50000) == doctest::Approx(4.4e-4).epsilon(0.01));
  CHECK_THROWS(make_record("exact", Scenario::Perfect, 4.0, 0.5, 2, 1));

  std::vector<SerRecord> rows{r, make_record("bcjrnet", Scenario::Uncertain, -2.0, std::nullopt, 7, 3000)};
  std::stringstream ss;
  write_ser_csv(ss, rows);
  CHECK(ss.str().rfind("detector,scenario,snr_db,gamma,errors,trials,ser\n", 0) == 0);
  CHECK(ss.str().find(",avg,") != std::string::npos);
  const auto back = read_ser_csv(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0].detector == "exact");
  CHECK(back[0].gamma == 0.5);
  CHECK(back[1].scenario == Scenario::Uncertain);
  CHECK_FALSE(back[1].gamma.has_value());
  CHECK(back[1].errors == 7);
}

TEST_CASE("sweeps") {
  SUBCASE("cardinality") {
    const auto res = run_sweep(small_sweep_config());
    CHECK(res.complete);
    CHECK(res.records.size() == 4);
    CHECK(res.averages.size() == 2);
    for (const auto& a : res.averages) CHECK(a.trials == 4000);
  }

  SUBCASE("resume computes only missing points") {
    test_support::TempDir tmp;
    const auto cfg = small_sweep_config();
    SweepOptions first;
    first.manifest_dir = tmp.path();
    first.max_new_points = 3;
    const auto partial = run_sweep(cfg, first);
    CHECK_FALSE(partial.complete);
    CHECK(partial.computed_points == 3);
    CHECK(partial.averages.empty());

    SweepOptions rest;
    rest.manifest_dir = tmp.path();
    const auto done = run_sweep(cfg, rest);
    CHECK(done.complete);
    CHECK(done.computed_points == 1);

    const auto again = run_sweep(cfg, rest);
    CHECK(again.computed_points == 0);

    const auto fresh = run_sweep(cfg);
    std::stringstream a, b;
    write_ser_csv(a, done.records);
    write_ser_csv(b, fresh.records);
    CHECK(a.str() == b.str());

    auto other = cfg;
    other.seed = 2;
    CHECK_THROWS(run_sweep(other, rest));
  }

  SUBCASE("parallel and serial sweeps agree") {
    auto cfg = small_sweep_config();
    cfg.sweep.scenarios = {Scenario::Perfect, Scenario::Uncertain};
    SweepOptions par;
    par.jobs = 3;
    const auto p = run_sweep(cfg, par);
    const auto s = run_sweep(cfg);
    std::stringstream a, b;
    write_ser_csv(a, p.records);
    write_ser_csv(b, s.records);
    CHECK(a.str() == b.str());
    CHECK(p.records.size() == 8);
  }

  SUBCASE("exact SER falls with SNR") {
    ExperimentConfig cfg;
    cfg.data.test_samples = 20000;
    cfg.sweep.snr_db = std::vector<double>{-2, 0, 2, 4, 6, 8, 10, 12};
    cfg.sweep.gamma_count = 3;
    cfg.sweep.detectors = {"exact"};
    cfg.sweep.scenarios = {Scenario::Perfect};
    const auto res = run_sweep(cfg);
    for (std::size_t i = 1; i < res.averages.size(); ++i) {
      const double prev = res.averages[i - 1].ser, cur = res.averages[i].ser;
      CHECK(cur <= prev + 3.0 * binomial_se(prev, res.averages[i - 1].trials));
    }
  }

  SUBCASE("uncertain exact detector uses perturbed taps") {
    auto cfg = small_sweep_config();
    cfg.sweep.snr_db = std::vector<double>{10.0};
    cfg.sweep.scenarios = {Scenario::Perfect, Scenario::Uncertain};
    cfg.data.test_samples = 10000;
    const auto recs = run_sweep_point(cfg, 0, 0);
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].scenario == Scenario::Perfect);
    CHECK(recs[1].scenario == Scenario::Uncertain);
    CHECK(recs[1].errors != recs[0].errors);
  }

  SUBCASE("summary") {
    const auto cfg = small_sweep_config();
    const auto res = run_sweep(cfg);
    const auto j = sweep_summary(cfg, res);
    CHECK(j.at("points").size() == 2);
    for (const auto& p : j.at("points")) {
      CHECK(p.at("geomean_ser").get<double>() > 0.0);
      CHECK(p.at("geomean_ser").get<double>() <= p.at("mean_ser").get<double>() + 1e-15);
    }
  }

  SUBCASE("manifest is written") {
    test_support::TempDir tmp;
    SweepOptions o;
    o.manifest_dir = tmp.path();
    run_sweep(small_sweep_config(), o);
    const auto m = nlohmann::json::parse(slurp(tmp.path() / "manifest.json"));
    CHECK(m.at("config_hash") == config_hash(small_sweep_config()));
    CHECK(m.at("points").size() == 4);
    for (const auto& [k, v] : m.at("points").items()) CHECK(v.at("status") == "complete");
  }
}

TEST_CASE("learned detector training scenarios") {
  ExperimentConfig cfg;
  cfg.data.train_samples = 2000;
  cfg.classifier.epochs = 3;
  const auto truth = ChannelSpec::make(ChannelFamily::IsiAwgn, decay_profile(0.5, 2), db_to_linear(6.0));
  const auto perfect = train_learned_detector(cfg, truth, Scenario::Perfect, 4);
  const auto uncertain = train_learned_detector(cfg, truth, Scenario::Uncertain, 4);
  CHECK_FALSE(perfect.node.density() == uncertain.node.density());
  const auto again = train_learned_detector(cfg, truth, Scenario::Uncertain, 4);
  CHECK(again.node.classifier() == uncertain.node.classifier());
}
