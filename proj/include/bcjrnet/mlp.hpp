#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bcjrnet {

enum class Activation { Sigmoid, Relu, Softmax };

std::string to_string(Activation a);
Activation parse_activation(const std::string& name);

/// Fully-connected classifier y -> P(s | y). All weights and biases live in one
/// flat vector so the optimizer and the gradient check can treat them uniformly.
/// Layer l has a (dims[l+1] x dims[l]) weight matrix followed by a dims[l+1] bias.
struct MlpParams {
  std::vector<std::size_t> dims;          // {1, hidden..., classes}
  std::vector<Activation> activations;    // one per layer; the last is Softmax
  Eigen::VectorXd theta;
  double input_mean = 0.0;
  double input_scale = 1.0;

  /// All-zero parameters (uniform output) for the given widths.
  static MlpParams zeros(std::vector<std::size_t> dims, std::vector<Activation> hidden_activations);
  /// Biases zero, weights uniform in +-sqrt(6 / (fan_in + fan_out)).
  static MlpParams glorot(std::vector<std::size_t> dims, std::vector<Activation> hidden_activations,
                          std::uint64_t seed);

  std::size_t layers() const { return dims.size() - 1; }
  std::size_t classes() const { return dims.back(); }
  std::size_t weight_offset(std::size_t layer) const;
  std::size_t bias_offset(std::size_t layer) const { return weight_offset(layer) + dims[layer + 1] * dims[layer]; }

  Eigen::Map<const Eigen::MatrixXd> weight(std::size_t layer) const;
  Eigen::Map<Eigen::MatrixXd> weight(std::size_t layer);
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;
  Eigen::Map<Eigen::VectorXd> bias(std::size_t layer);

  bool operator==(const MlpParams& other) const;
};

/// The default architecture: 1 -> 100 (sigmoid) -> 50 (ReLU) -> classes (softmax).
std::vector<std::size_t> default_mlp_dims(std::size_t classes);
std::vector<Activation> default_hidden_activations();

class MlpError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Class probabilities for one observation.
Eigen::VectorXd forward(const MlpParams& params, double y);
/// classes x n matrix of probabilities, one column per observation.
Eigen::MatrixXd forward_batch(const MlpParams& params, std::span<const double> ys);

struct Batch {
  std::span<const double> inputs;
  std::span<const std::size_t> labels;
};

struct LossGradient {
  double loss = 0.0;  // mean cross-entropy
  Eigen::VectorXd gradient;
};

double batch_loss(const MlpParams& params, const Batch& batch);
LossGradient loss_and_gradient(const MlpParams& params, const Batch& batch);

struct AdamState {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  std::uint64_t step = 0;

  void update(Eigen::VectorXd& theta, const Eigen::VectorXd& gradient);
};

struct TrainConfig {
  int epochs = 100;
  std::size_t batch_size = 128;
  std::uint64_t seed = 1;
  std::vector<std::size_t> hidden{100, 50};
  std::vector<Activation> hidden_activations{Activation::Sigmoid, Activation::Relu};
  /// Record the loss over the whole dataset after each epoch instead of the
  /// running minibatch average (one extra forward pass per epoch).
  bool full_loss_each_epoch = false;
};

class TrainingDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  MlpParams params;
  std::vector<double> epoch_loss;
};

TrainResult train(std::span<const double> observations, std::span<const std::size_t> labels, std::size_t classes,
                  const TrainConfig& config, AdamState& adam);

/// Text format, see docs/file_formats.md.
void write_mlp(std::ostream& out, const MlpParams& params);
MlpParams read_mlp(std::istream& in);

}  // namespace bcjrnet
