#include "bcjrnet/exact_node.hpp"

#include <cmath>

namespace bcjrnet {

ExactNode::ExactNode(ChannelSpec spec) : spec_(std::move(spec)), space_(spec_.state_space()) {
  state_param_.reserve(space_.size());
  for (std::size_t s = 0; s < space_.size(); ++s)
    state_param_.push_back(spec_.family == ChannelFamily::IsiAwgn ? state_signal(spec_, space_, StateIndex(s))
                                                                  : poisson_rate(spec_, space_, StateIndex(s)));
}

double ExactNode::likelihood(double y, StateIndex s) const {
  const double p = state_param_.at(s.value);
  if (spec_.family == ChannelFamily::IsiAwgn) {
    if (!std::isfinite(y)) throw ChannelError("observation must be finite");
    return normal_pdf(y, p, 1.0);
  }
  return poisson_pmf_at_rate(y, p);
}

}  // namespace bcjrnet
