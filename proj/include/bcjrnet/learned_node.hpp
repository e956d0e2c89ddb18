#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "bcjrnet/channels.hpp"
#include "bcjrnet/gmm.hpp"
#include "bcjrnet/mlp.hpp"
#include "bcjrnet/trellis.hpp"
#include "json.hpp"

namespace bcjrnet {

/// Labels each observation with the state that produced it.
LabeledDataset build_training_set(std::span<const SymbolBlock> blocks, const StateSpace& space);
LabeledDataset build_training_set(std::span<const double> x_block, std::span<const double> y_block,
                                  const StateSpace& space);

/// Data-driven function node: P(y | s) = |S| * P_theta(s | y) * P_phi(y), with
/// P_theta a softmax classifier and P_phi a Gaussian mixture fitted to the
/// observation marginal.
class LearnedNode final : public FunctionNode {
 public:
  LearnedNode(StateSpace space, MlpParams classifier, GmmParams density);

  const StateSpace& state_space() const override { return space_; }
  double likelihood(double y, StateIndex s) const override { return learned_likelihood(y, s); }
  void likelihood_table(std::span<const double> y_block, std::span<double> out) const override;

  double learned_likelihood(double y, StateIndex s) const;
  /// P_phi(y), or the constant if one was substituted.
  double marginal_density(double y) const;
  Eigen::VectorXd state_posterior(double y) const { return forward(classifier_, y); }

  /// Copy whose marginal density is replaced by the constant `value` (> 0).
  LearnedNode with_constant_density(double value) const;

  const MlpParams& classifier() const { return classifier_; }
  const GmmParams& density() const { return density_; }

 private:
  StateSpace space_;
  MlpParams classifier_;
  GmmParams density_;
  std::optional<double> constant_density_;
};

struct LearnedNodeTraining {
  LearnedNode node;
  std::vector<double> epoch_loss;
  EmResult density_fit;
};

/// Trains the classifier on (y, state) pairs and fits a |S|-component (or
/// `em_components` if non-zero) mixture to the observations.
LearnedNodeTraining train_bcjrnet(const LabeledDataset& dataset, const StateSpace& space, const TrainConfig& train,
                                  const AdamState& adam, const EmConfig& em, std::size_t em_components = 0);

/// Bundle directory: classifier.txt, mixture.txt, meta.json, diagnostics.json.
void save_bundle(const std::filesystem::path& dir, const LearnedNode& node, nlohmann::json metadata,
                 const nlohmann::json& diagnostics);

struct LoadedBundle {
  LearnedNode node;
  nlohmann::json metadata;
};
LoadedBundle load_bundle(const std::filesystem::path& dir);

}  // namespace bcjrnet
