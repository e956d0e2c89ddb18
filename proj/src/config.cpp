#include "bcjrnet/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace bcjrnet {
namespace {

using nlohmann::json;

/// Typed access to one JSON object, rejecting unknown keys.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (!known_.count(it.key())) throw ConfigError(field(it.key()), "unknown key");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    known_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() || it->is_null() ? nullptr : &*it;
  }

  Section child(const std::string& key) {
    static const json empty = json::object();
    const json* v = find(key);
    return Section(v ? *v : empty, field(key));
  }

  double number(const std::string& key, double fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_number()) throw ConfigError(field(key), "expected a number");
    const double d = v->get<double>();
    if (!std::isfinite(d)) throw ConfigError(field(key), "must be finite");
    return d;
  }

  std::optional<double> optional_number(const std::string& key) {
    if (!find(key)) return std::nullopt;
    return number(key, 0.0);
  }

  double positive(const std::string& key, double fallback) {
    const double d = number(key, fallback);
    if (!(d > 0.0)) throw ConfigError(field(key), "must be positive");
    return d;
  }

  std::uint64_t count(const std::string& key, std::uint64_t fallback, std::uint64_t min = 0) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_number_integer() || (!v->is_number_unsigned() && v->get<std::int64_t>() < 0))
      throw ConfigError(field(key), "expected a non-negative integer");
    const auto n = v->get<std::uint64_t>();
    if (n < min) throw ConfigError(field(key), "must be at least " + std::to_string(min));
    return n;
  }

  std::string text(const std::string& key, const std::string& fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_string()) throw ConfigError(field(key), "expected a string");
    return v->get<std::string>();
  }

  template <typename F>
  auto list(const std::string& key, F&& each) -> std::optional<std::vector<decltype(each(json(), std::string()))>> {
    const json* v = find(key);
    if (!v) return std::nullopt;
    if (!v->is_array()) throw ConfigError(field(key), "expected a list");
    std::vector<decltype(each(json(), std::string()))> out;
    for (std::size_t i = 0; i < v->size(); ++i) out.push_back(each((*v)[i], field(key) + "[" + std::to_string(i) + "]"));
    return out;
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> known_;
};

template <typename T, typename F>
T wrap(const std::string& field, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(field, e.what());
  }
}

}  // namespace

std::string to_string(Scenario s) { return s == Scenario::Perfect ? "perfect" : "uncertain"; }

Scenario parse_scenario(const std::string& name) {
  if (name == "perfect") return Scenario::Perfect;
  if (name == "uncertain") return Scenario::Uncertain;
  throw std::invalid_argument("unknown scenario '" + name + "' (expected perfect or uncertain)");
}

double ExperimentConfig::sigma_e_sq() const {
  if (uncertainty.sigma_e_sq) return *uncertainty.sigma_e_sq;
  return channel.family == ChannelFamily::IsiAwgn ? 0.1 : 0.08;
}

std::vector<double> ExperimentConfig::snr_grid_db() const {
  if (sweep.snr_db) return *sweep.snr_db;
  std::vector<double> grid;
  if (channel.family == ChannelFamily::IsiAwgn)
    for (int db = -2; db <= 12; db += 2) grid.push_back(db);
  else
    for (int db = 10; db <= 34; db += 4) grid.push_back(db);
  return grid;
}

std::vector<double> ExperimentConfig::gamma_grid() const {
  std::vector<double> g;
  const std::size_t n = sweep.gamma_count;
  for (std::size_t k = 0; k < n; ++k)
    g.push_back(n == 1 ? sweep.gamma_min
                       : sweep.gamma_min + (sweep.gamma_max - sweep.gamma_min) * static_cast<double>(k) /
                                               static_cast<double>(n - 1));
  return g;
}

double ExperimentConfig::snr_db_required() const {
  if (!channel.snr_db) throw ConfigError("channel.snr_db", "missing (required for this command)");
  return *channel.snr_db;
}

ChannelSpec ExperimentConfig::channel_spec() const {
  return ChannelSpec::make(channel.family, decay_profile(channel.gamma, channel.memory), db_to_linear(snr_db_required()));
}

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c;
  Section root(j, "");
  c.seed = root.count("seed", c.seed);
  c.jobs = root.count("jobs", c.jobs, 1);
  c.out_dir = root.text("out_dir", c.out_dir);

  {
    Section s = root.child("channel");
    const std::string fam = s.text("family", to_string(c.channel.family));
    c.channel.family = wrap<ChannelFamily>(s.field("family"), [&] { return parse_channel_family(fam); });
    c.channel.memory = static_cast<int>(s.count("memory", c.channel.memory, 1));
    c.channel.gamma = s.positive("gamma", c.channel.gamma);
    c.channel.snr_db = s.optional_number("snr_db");
  }
  {
    Section s = root.child("data");
    c.data.train_samples = s.count("train_samples", c.data.train_samples, 1);
    c.data.test_samples = s.count("test_samples", c.data.test_samples, 1);
    c.data.block_length = s.count("block_length", c.data.block_length, 1);
  }
  {
    Section s = root.child("classifier");
    if (auto h = s.list("hidden", [](const json& v, const std::string& f) {
          if (!v.is_number_unsigned() || v.get<std::size_t>() == 0) throw ConfigError(f, "expected a positive integer");
          return v.get<std::size_t>();
        }))
      c.classifier.hidden = *h;
    if (auto a = s.list("hidden_activations", [](const json& v, const std::string& f) {
          if (!v.is_string()) throw ConfigError(f, "expected a string");
          const auto act = wrap<Activation>(f, [&] { return parse_activation(v.get<std::string>()); });
          if (act == Activation::Softmax) throw ConfigError(f, "softmax is reserved for the output layer");
          return act;
        }))
      c.classifier.hidden_activations = *a;
    if (c.classifier.hidden.size() != c.classifier.hidden_activations.size())
      throw ConfigError(s.field("hidden_activations"), "needs one entry per hidden layer");
    c.classifier.epochs = static_cast<int>(s.count("epochs", static_cast<std::uint64_t>(c.classifier.epochs), 1));
    c.classifier.batch_size = s.count("batch_size", c.classifier.batch_size, 1);
  }
  {
    Section s = root.child("adam");
    c.adam.learning_rate = s.positive("learning_rate", c.adam.learning_rate);
    c.adam.beta1 = s.number("beta1", c.adam.beta1);
    c.adam.beta2 = s.number("beta2", c.adam.beta2);
    c.adam.epsilon = s.positive("epsilon", c.adam.epsilon);
    if (!(c.adam.beta1 >= 0.0 && c.adam.beta1 < 1.0)) throw ConfigError(s.field("beta1"), "must lie in [0, 1)");
    if (!(c.adam.beta2 >= 0.0 && c.adam.beta2 < 1.0)) throw ConfigError(s.field("beta2"), "must lie in [0, 1)");
  }
  {
    Section s = root.child("mixture");
    c.mixture_components = s.count("components", c.mixture_components);
    c.mixture.max_iterations = static_cast<int>(s.count("max_iterations", c.mixture.max_iterations, 1));
    c.mixture.relative_tolerance = s.positive("relative_tolerance", c.mixture.relative_tolerance);
    c.mixture.variance_floor = s.positive("variance_floor", c.mixture.variance_floor);
  }
  {
    Section s = root.child("train");
    const std::string sc = s.text("scenario", to_string(c.train_scenario));
    c.train_scenario = wrap<Scenario>(s.field("scenario"), [&] { return parse_scenario(sc); });
  }
  {
    Section s = root.child("uncertainty");
    c.uncertainty.sigma_e_sq = s.optional_number("sigma_e_sq");
    if (c.uncertainty.sigma_e_sq && *c.uncertainty.sigma_e_sq < 0.0)
      throw ConfigError(s.field("sigma_e_sq"), "must be non-negative");
    c.uncertainty.realizations = s.count("realizations", c.uncertainty.realizations, 1);
  }
  {
    Section s = root.child("sweep");
    c.sweep.snr_db = s.list("snr_db", [](const json& v, const std::string& f) {
      if (!v.is_number()) throw ConfigError(f, "expected a number");
      return v.get<double>();
    });
    if (c.sweep.snr_db && c.sweep.snr_db->empty()) throw ConfigError(s.field("snr_db"), "must not be empty");
    c.sweep.gamma_count = s.count("gamma_count", c.sweep.gamma_count, 1);
    c.sweep.gamma_min = s.positive("gamma_min", c.sweep.gamma_min);
    c.sweep.gamma_max = s.positive("gamma_max", c.sweep.gamma_max);
    if (c.sweep.gamma_max < c.sweep.gamma_min) throw ConfigError(s.field("gamma_max"), "must be >= gamma_min");
    if (auto d = s.list("detectors", [](const json& v, const std::string& f) {
          if (!v.is_string() || (v != "exact" && v != "bcjrnet")) throw ConfigError(f, "expected \"exact\" or \"bcjrnet\"");
          return v.get<std::string>();
        }))
      c.sweep.detectors = *d;
    if (auto sc = s.list("scenarios", [](const json& v, const std::string& f) {
          if (!v.is_string()) throw ConfigError(f, "expected a string");
          return wrap<Scenario>(f, [&] { return parse_scenario(v.get<std::string>()); });
        }))
      c.sweep.scenarios = *sc;
    if (c.sweep.detectors.empty()) throw ConfigError(s.field("detectors"), "must not be empty");
    if (c.sweep.scenarios.empty()) throw ConfigError(s.field("scenarios"), "must not be empty");
  }
  return c;
}

ExperimentConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("malformed config: ") + e.what());
  }
  return parse_config(j);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["jobs"] = c.jobs;
  j["out_dir"] = c.out_dir;
  j["channel"] = {{"family", to_string(c.channel.family)},
                  {"memory", c.channel.memory},
                  {"gamma", c.channel.gamma},
                  {"snr_db", c.channel.snr_db ? json(*c.channel.snr_db) : json(nullptr)}};
  j["data"] = {{"train_samples", c.data.train_samples},
               {"test_samples", c.data.test_samples},
               {"block_length", c.data.block_length}};
  json acts = json::array();
  for (Activation a : c.classifier.hidden_activations) acts.push_back(to_string(a));
  j["classifier"] = {{"hidden", c.classifier.hidden},
                     {"hidden_activations", acts},
                     {"epochs", c.classifier.epochs},
                     {"batch_size", c.classifier.batch_size}};
  j["adam"] = {{"learning_rate", c.adam.learning_rate},
               {"beta1", c.adam.beta1},
               {"beta2", c.adam.beta2},
               {"epsilon", c.adam.epsilon}};
  j["mixture"] = {{"components", c.mixture_components},
                  {"max_iterations", c.mixture.max_iterations},
                  {"relative_tolerance", c.mixture.relative_tolerance},
                  {"variance_floor", c.mixture.variance_floor}};
  j["train"] = {{"scenario", to_string(c.train_scenario)}};
  j["uncertainty"] = {{"sigma_e_sq", c.uncertainty.sigma_e_sq ? json(*c.uncertainty.sigma_e_sq) : json(nullptr)},
                      {"realizations", c.uncertainty.realizations}};
  json scen = json::array();
  for (Scenario s : c.sweep.scenarios) scen.push_back(to_string(s));
  j["sweep"] = {{"snr_db", c.sweep.snr_db ? json(*c.sweep.snr_db) : json(nullptr)},
                {"gamma_count", c.sweep.gamma_count},
                {"gamma_min", c.sweep.gamma_min},
                {"gamma_max", c.sweep.gamma_max},
                {"detectors", c.sweep.detectors},
                {"scenarios", scen}};
  return j;
}

std::string config_hash(const ExperimentConfig& c) {
  json j = to_json(c);
  j.erase("jobs");
  j.erase("out_dir");
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 0x100000001B3ull;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

void apply_env_overrides(ExperimentConfig& c, const std::function<const char*(const char*)>& getenv_fn) {
  auto as_count = [](const char* name, const char* v) {
    try {
      std::size_t used = 0;
      const unsigned long long n = std::stoull(v, &used);
      if (used != std::string(v).size()) throw std::invalid_argument("trailing characters");
      return static_cast<std::uint64_t>(n);
    } catch (const std::exception&) {
      throw ConfigError(name, "expected a non-negative integer, got '" + std::string(v) + "'");
    }
  };
  if (const char* v = getenv_fn("BCJRNET_SEED")) c.seed = as_count("BCJRNET_SEED", v);
  if (const char* v = getenv_fn("BCJRNET_JOBS")) {
    c.jobs = as_count("BCJRNET_JOBS", v);
    if (c.jobs == 0) throw ConfigError("BCJRNET_JOBS", "must be at least 1");
  }
  if (const char* v = getenv_fn("BCJRNET_OUT_DIR")) c.out_dir = v;
}

}  // namespace bcjrnet
