#pragma once

#include <vector>

#include "bcjrnet/channels.hpp"
#include "bcjrnet/trellis.hpp"

namespace bcjrnet {

/// Model-based function node: P(y | s) straight from a channel specification.
/// Pass a perturbed-tap spec to get the mismatched-CSI detector.
class ExactNode final : public FunctionNode {
 public:
  explicit ExactNode(ChannelSpec spec);

  const StateSpace& state_space() const override { return space_; }
  const ChannelSpec& spec() const { return spec_; }

  double likelihood(double y, StateIndex s) const override;

 private:
  ChannelSpec spec_;
  StateSpace space_;
  std::vector<double> state_param_;  // mean (ISI-AWGN) or rate (Poisson) per state
};

}  // namespace bcjrnet
