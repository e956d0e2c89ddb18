#include "bcjrnet/learned_node.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace bcjrnet {

LabeledDataset build_training_set(std::span<const SymbolBlock> blocks, const StateSpace& space) {
  LabeledDataset d;
  for (const SymbolBlock& b : blocks) {
    if (b.x.size() != b.y.size()) throw ChannelError("symbol and observation blocks differ in length");
    d.block_starts.push_back(d.observations.size());
    const auto states = state_sequence(b.x, space);
    d.observations.insert(d.observations.end(), b.y.begin(), b.y.end());
    d.states.insert(d.states.end(), states.begin(), states.end());
  }
  return d;
}

LabeledDataset build_training_set(std::span<const double> x_block, std::span<const double> y_block,
                                  const StateSpace& space) {
  SymbolBlock b{{x_block.begin(), x_block.end()}, {y_block.begin(), y_block.end()}};
  return build_training_set(std::span<const SymbolBlock>(&b, 1), space);
}

LearnedNode::LearnedNode(StateSpace space, MlpParams classifier, GmmParams density)
    : space_(std::move(space)), classifier_(std::move(classifier)), density_(std::move(density)) {
  if (classifier_.classes() != space_.size())
    throw std::invalid_argument("classifier output width must equal the number of trellis states");
  if (density_.components() == 0) throw std::invalid_argument("mixture density has no components");
}

double LearnedNode::marginal_density(double y) const {
  return constant_density_ ? *constant_density_ : bcjrnet::density(density_, y);
}

double LearnedNode::learned_likelihood(double y, StateIndex s) const {
  const Eigen::VectorXd post = forward(classifier_, y);
  return static_cast<double>(space_.size()) * post(static_cast<Eigen::Index>(s.value)) * marginal_density(y);
}

void LearnedNode::likelihood_table(std::span<const double> y_block, std::span<double> out) const {
  const std::size_t S = space_.size();
  const Eigen::MatrixXd post = forward_batch(classifier_, y_block);
  for (std::size_t i = 0; i < y_block.size(); ++i) {
    const double scale = static_cast<double>(S) * marginal_density(y_block[i]);
    for (std::size_t s = 0; s < S; ++s)
      out[i * S + s] = scale * post(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i));
  }
}

LearnedNode LearnedNode::with_constant_density(double value) const {
  if (!(value > 0.0) || !std::isfinite(value)) throw std::invalid_argument("constant density must be positive");
  LearnedNode copy = *this;
  copy.constant_density_ = value;
  return copy;
}

LearnedNodeTraining train_bcjrnet(const LabeledDataset& dataset, const StateSpace& space, const TrainConfig& train,
                                  const AdamState& adam, const EmConfig& em, std::size_t em_components) {
  if (dataset.size() == 0) throw std::invalid_argument("training set must not be empty");
  std::vector<std::size_t> labels;
  labels.reserve(dataset.size());
  for (StateIndex s : dataset.states) labels.push_back(s.value);

  AdamState optimizer = adam;
  optimizer.first_moment.resize(0);
  optimizer.second_moment.resize(0);
  optimizer.step = 0;
  TrainResult tr = bcjrnet::train(dataset.observations, labels, space.size(), train, optimizer);
  EmResult fit = em_fit(dataset.observations, em_components == 0 ? space.size() : em_components, em);
  return {LearnedNode(space, std::move(tr.params), fit.params), std::move(tr.epoch_loss), std::move(fit)};
}

void save_bundle(const std::filesystem::path& dir, const LearnedNode& node, nlohmann::json metadata,
                 const nlohmann::json& diagnostics) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "classifier.txt", std::ios::binary);
    write_mlp(f, node.classifier());
  }
  {
    std::ofstream f(dir / "mixture.txt", std::ios::binary);
    write_gmm(f, node.density());
  }
  metadata["format_version"] = 1;
  metadata["memory"] = node.state_space().memory();
  metadata["alphabet"] = node.state_space().alphabet().symbols();
  std::ofstream(dir / "meta.json", std::ios::binary) << metadata.dump(2) << '\n';
  std::ofstream(dir / "diagnostics.json", std::ios::binary) << diagnostics.dump(2) << '\n';
}

LoadedBundle load_bundle(const std::filesystem::path& dir) {
  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in) throw std::runtime_error("cannot open " + (dir / "meta.json").string());
  nlohmann::json meta = nlohmann::json::parse(meta_in);
  if (meta.value("format_version", 0) != 1) throw std::runtime_error("unsupported model bundle version");
  StateSpace space(Alphabet(meta.at("alphabet").get<std::vector<double>>()), meta.at("memory").get<std::size_t>());

  std::ifstream cls(dir / "classifier.txt");
  if (!cls) throw std::runtime_error("cannot open " + (dir / "classifier.txt").string());
  std::ifstream mix(dir / "mixture.txt");
  if (!mix) throw std::runtime_error("cannot open " + (dir / "mixture.txt").string());
  return {LearnedNode(space, read_mlp(cls), read_gmm(mix)), std::move(meta)};
}

}  // namespace bcjrnet
