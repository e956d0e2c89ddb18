#include "bcjrnet/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "bcjrnet/csv.hpp"
#include "bcjrnet/rng.hpp"

namespace bcjrnet {
namespace {

using Eigen::MatrixXd;

void check_shape(const std::vector<std::size_t>& dims, const std::vector<Activation>& acts) {
  if (dims.size() < 2) throw MlpError("network needs at least one layer");
  if (dims.front() != 1) throw MlpError("network input width must be 1");
  for (std::size_t d : dims)
    if (d == 0) throw MlpError("layer widths must be positive");
  if (acts.size() != dims.size() - 1) throw MlpError("one activation per layer required");
  if (acts.back() != Activation::Softmax) throw MlpError("output layer must be softmax");
  for (std::size_t l = 0; l + 1 < acts.size(); ++l)
    if (acts[l] == Activation::Softmax) throw MlpError("softmax is only allowed on the output layer");
}

std::size_t parameter_count(const std::vector<std::size_t>& dims) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) n += dims[l + 1] * (dims[l] + 1);
  return n;
}

std::vector<Activation> with_output(std::vector<Activation> hidden) {
  hidden.push_back(Activation::Softmax);
  return hidden;
}

void apply_activation(Activation a, MatrixXd& z) {
  switch (a) {
    case Activation::Sigmoid:
      z = (1.0 + (-z.array()).exp()).inverse().matrix();
      break;
    case Activation::Relu:
      z = z.cwiseMax(0.0);
      break;
    case Activation::Softmax:
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        auto col = z.col(c);
        col.array() = (col.array() - col.maxCoeff()).exp();
        col /= col.sum();
      }
      break;
  }
}

/// Row vector of standardized inputs.
MatrixXd input_row(const MlpParams& p, std::span<const double> ys) {
  MatrixXd x(1, static_cast<Eigen::Index>(ys.size()));
  for (std::size_t i = 0; i < ys.size(); ++i) {
    if (!std::isfinite(ys[i])) throw MlpError("classifier input must be finite");
    x(0, static_cast<Eigen::Index>(i)) = (ys[i] - p.input_mean) / p.input_scale;
  }
  return x;
}

/// Activations of every layer; acts[0] is the input, acts.back() the probabilities.
std::vector<MatrixXd> forward_all(const MlpParams& p, std::span<const double> ys) {
  std::vector<MatrixXd> acts;
  acts.reserve(p.layers() + 1);
  acts.push_back(input_row(p, ys));
  for (std::size_t l = 0; l < p.layers(); ++l) {
    MatrixXd z = p.weight(l) * acts.back();
    z.colwise() += p.bias(l);
    apply_activation(p.activations[l], z);
    acts.push_back(std::move(z));
  }
  return acts;
}

void check_labels(const MlpParams& p, const Batch& batch) {
  if (batch.inputs.empty()) throw MlpError("batch must not be empty");
  if (batch.inputs.size() != batch.labels.size()) throw MlpError("batch inputs and labels differ in length");
  for (std::size_t l : batch.labels)
    if (l >= p.classes()) throw MlpError("label " + std::to_string(l) + " out of range");
}

double cross_entropy(const MatrixXd& probs, std::span<const std::size_t> labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    total -= std::log(std::max(probs(static_cast<Eigen::Index>(labels[i]), static_cast<Eigen::Index>(i)),
                               std::numeric_limits<double>::min()));
  return total / static_cast<double>(labels.size());
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Relu: return "relu";
    case Activation::Softmax: return "softmax";
  }
  return "?";
}

Activation parse_activation(const std::string& name) {
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "relu") return Activation::Relu;
  if (name == "softmax") return Activation::Softmax;
  throw MlpError("unknown activation '" + name + "'");
}

MlpParams MlpParams::zeros(std::vector<std::size_t> dims, std::vector<Activation> hidden_activations) {
  MlpParams p;
  p.activations = with_output(std::move(hidden_activations));
  check_shape(dims, p.activations);
  p.theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameter_count(dims)));
  p.dims = std::move(dims);
  return p;
}

MlpParams MlpParams::glorot(std::vector<std::size_t> dims, std::vector<Activation> hidden_activations,
                            std::uint64_t seed) {
  MlpParams p = zeros(std::move(dims), std::move(hidden_activations));
  Rng rng(seed);
  for (std::size_t l = 0; l < p.layers(); ++l) {
    const double limit = std::sqrt(6.0 / static_cast<double>(p.dims[l] + p.dims[l + 1]));
    auto w = p.weight(l);
    // Fill in row-major order so the draw sequence matches the file layout.
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-limit, limit);
  }
  return p;
}

std::size_t MlpParams::weight_offset(std::size_t layer) const {
  std::size_t off = 0;
  for (std::size_t l = 0; l < layer; ++l) off += dims[l + 1] * (dims[l] + 1);
  return off;
}

Eigen::Map<const Eigen::MatrixXd> MlpParams::weight(std::size_t l) const {
  return {theta.data() + weight_offset(l), static_cast<Eigen::Index>(dims[l + 1]), static_cast<Eigen::Index>(dims[l])};
}
Eigen::Map<Eigen::MatrixXd> MlpParams::weight(std::size_t l) {
  return {theta.data() + weight_offset(l), static_cast<Eigen::Index>(dims[l + 1]), static_cast<Eigen::Index>(dims[l])};
}
Eigen::Map<const Eigen::VectorXd> MlpParams::bias(std::size_t l) const {
  return {theta.data() + bias_offset(l), static_cast<Eigen::Index>(dims[l + 1])};
}
Eigen::Map<Eigen::VectorXd> MlpParams::bias(std::size_t l) {
  return {theta.data() + bias_offset(l), static_cast<Eigen::Index>(dims[l + 1])};
}

bool MlpParams::operator==(const MlpParams& o) const {
  return dims == o.dims && activations == o.activations && theta == o.theta && input_mean == o.input_mean &&
         input_scale == o.input_scale;
}

std::vector<std::size_t> default_mlp_dims(std::size_t classes) { return {1, 100, 50, classes}; }
std::vector<Activation> default_hidden_activations() { return {Activation::Sigmoid, Activation::Relu}; }

Eigen::VectorXd forward(const MlpParams& params, double y) {
  const double in[1] = {y};
  return forward_batch(params, in).col(0);
}

Eigen::MatrixXd forward_batch(const MlpParams& params, std::span<const double> ys) {
  return std::move(forward_all(params, ys).back());
}

double batch_loss(const MlpParams& params, const Batch& batch) {
  check_labels(params, batch);
  return cross_entropy(forward_batch(params, batch.inputs), batch.labels);
}

LossGradient loss_and_gradient(const MlpParams& params, const Batch& batch) {
  check_labels(params, batch);
  const auto acts = forward_all(params, batch.inputs);
  const double inv_b = 1.0 / static_cast<double>(batch.labels.size());

  LossGradient out;
  out.loss = cross_entropy(acts.back(), batch.labels);
  out.gradient = Eigen::VectorXd::Zero(params.theta.size());

  // Softmax + cross-entropy: dL/dz = (p - onehot) / B.
  MatrixXd delta = acts.back();
  for (std::size_t i = 0; i < batch.labels.size(); ++i)
    delta(static_cast<Eigen::Index>(batch.labels[i]), static_cast<Eigen::Index>(i)) -= 1.0;
  delta *= inv_b;

  for (std::size_t l = params.layers(); l-- > 0;) {
    const MatrixXd& a_in = acts[l];
    Eigen::Map<MatrixXd>(out.gradient.data() + params.weight_offset(l), delta.rows(), a_in.rows()) =
        delta * a_in.transpose();
    Eigen::Map<Eigen::VectorXd>(out.gradient.data() + params.bias_offset(l), delta.rows()) = delta.rowwise().sum();
    if (l == 0) break;
    MatrixXd back = params.weight(l).transpose() * delta;
    switch (params.activations[l - 1]) {
      case Activation::Sigmoid:
        back.array() *= a_in.array() * (1.0 - a_in.array());
        break;
      case Activation::Relu:
        back.array() *= (a_in.array() > 0.0).cast<double>();
        break;
      case Activation::Softmax:
        throw MlpError("softmax is only allowed on the output layer");
    }
    delta = std::move(back);
  }
  return out;
}

void AdamState::update(Eigen::VectorXd& theta, const Eigen::VectorXd& gradient) {
  if (first_moment.size() != theta.size()) {
    first_moment = Eigen::VectorXd::Zero(theta.size());
    second_moment = Eigen::VectorXd::Zero(theta.size());
  }
  ++step;
  first_moment = beta1 * first_moment + (1.0 - beta1) * gradient;
  second_moment = beta2 * second_moment + (1.0 - beta2) * gradient.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  theta.array() -= learning_rate * (first_moment.array() / c1) / ((second_moment.array() / c2).sqrt() + epsilon);
}

TrainResult train(std::span<const double> observations, std::span<const std::size_t> labels, std::size_t classes,
                  const TrainConfig& config, AdamState& adam) {
  if (observations.empty()) throw MlpError("training set must not be empty");
  if (observations.size() != labels.size()) throw MlpError("observations and labels differ in length");
  if (config.epochs < 1) throw MlpError("epochs must be at least 1");
  if (config.batch_size < 1) throw MlpError("batch size must be at least 1");
  if (config.hidden.size() != config.hidden_activations.size())
    throw MlpError("one hidden activation per hidden layer required");

  std::vector<std::size_t> dims{1};
  dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
  dims.push_back(classes);

  TrainResult result;
  MlpParams& p = result.params;
  p = MlpParams::glorot(dims, config.hidden_activations, derive_seed(config.seed, {1}));

  const double n = static_cast<double>(observations.size());
  const double mean = std::accumulate(observations.begin(), observations.end(), 0.0) / n;
  double var = 0.0;
  for (double y : observations) var += (y - mean) * (y - mean);
  var /= n;
  p.input_mean = mean;
  p.input_scale = var > 0.0 ? std::sqrt(var) : 1.0;

  std::vector<std::size_t> order(observations.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng(derive_seed(config.seed, {2}));
  std::vector<double> bx;
  std::vector<std::size_t> by;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    double running = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      bx.clear();
      by.clear();
      for (std::size_t k = start; k < end; ++k) {
        bx.push_back(observations[order[k]]);
        by.push_back(labels[order[k]]);
      }
      const LossGradient lg = loss_and_gradient(p, {bx, by});
      if (!std::isfinite(lg.loss) || !lg.gradient.allFinite())
        throw TrainingDivergedError("training diverged at epoch " + std::to_string(epoch + 1) + ", Adam step " +
                                    std::to_string(adam.step + 1) + " (loss " + format_double(lg.loss) + ")");
      running += lg.loss * static_cast<double>(end - start);
      adam.update(p.theta, lg.gradient);
    }
    result.epoch_loss.push_back(config.full_loss_each_epoch ? batch_loss(p, {observations, labels}) : running / n);
  }
  return result;
}

void write_mlp(std::ostream& out, const MlpParams& p) {
  out << "bcjrnet-mlp 1\n";
  out << "dims";
  for (std::size_t d : p.dims) out << ' ' << d;
  out << "\nactivations";
  for (Activation a : p.activations) out << ' ' << to_string(a);
  out << "\ninput_mean " << format_double(p.input_mean) << "\ninput_scale " << format_double(p.input_scale) << '\n';
  for (std::size_t l = 0; l < p.layers(); ++l) {
    const auto w = p.weight(l);
    out << "weight " << l << ' ' << w.rows() << ' ' << w.cols() << '\n';
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) out << (c ? " " : "") << format_double(w(r, c));
      out << '\n';
    }
    const auto b = p.bias(l);
    out << "bias " << l << ' ' << b.size() << '\n';
    for (Eigen::Index r = 0; r < b.size(); ++r) out << (r ? " " : "") << format_double(b(r));
    out << '\n';
  }
}

namespace {

void expect_token(std::istream& in, const std::string& want) {
  std::string tok;
  if (!(in >> tok) || tok != want) throw MlpError("model file: expected '" + want + "', got '" + tok + "'");
}

double read_number(std::istream& in) {
  std::string tok;
  if (!(in >> tok)) throw MlpError("model file: unexpected end of input");
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw MlpError("model file: malformed number '" + tok + "'");
    return v;
  } catch (const std::logic_error&) {
    throw MlpError("model file: malformed number '" + tok + "'");
  }
}

std::size_t read_size(std::istream& in) {
  const double v = read_number(in);
  if (v < 0 || std::floor(v) != v) throw MlpError("model file: expected a non-negative integer");
  return static_cast<std::size_t>(v);
}

}  // namespace

MlpParams read_mlp(std::istream& in) {
  expect_token(in, "bcjrnet-mlp");
  if (read_size(in) != 1) throw MlpError("model file: unsupported version");
  std::string line;
  expect_token(in, "dims");
  std::getline(in, line);
  std::vector<std::size_t> dims;
  {
    std::istringstream ls(line);
    while (ls >> std::ws && !ls.eof()) dims.push_back(read_size(ls));
  }
  expect_token(in, "activations");
  std::getline(in, line);
  std::vector<Activation> acts;
  {
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) acts.push_back(parse_activation(tok));
  }
  if (acts.empty()) throw MlpError("model file: missing activations");
  acts.pop_back();
  MlpParams p = MlpParams::zeros(dims, acts);
  expect_token(in, "input_mean");
  p.input_mean = read_number(in);
  expect_token(in, "input_scale");
  p.input_scale = read_number(in);
  for (std::size_t l = 0; l < p.layers(); ++l) {
    expect_token(in, "weight");
    if (read_size(in) != l) throw MlpError("model file: layers out of order");
    auto w = p.weight(l);
    if (read_size(in) != static_cast<std::size_t>(w.rows()) || read_size(in) != static_cast<std::size_t>(w.cols()))
      throw MlpError("model file: weight shape does not match dims");
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = read_number(in);
    expect_token(in, "bias");
    if (read_size(in) != l) throw MlpError("model file: layers out of order");
    auto b = p.bias(l);
    if (read_size(in) != static_cast<std::size_t>(b.size())) throw MlpError("model file: bias shape does not match dims");
    for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = read_number(in);
  }
  if (!p.theta.allFinite()) throw MlpError("model file: non-finite parameter");
  return p;
}

}  // namespace bcjrnet
