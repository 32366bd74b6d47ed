#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "autosmote/nn.hpp"

namespace gradcheck {

inline constexpr double kStep = 1e-5;
inline constexpr double kFloor = 1e-6;

inline double relative_error(double analytic, double numeric, double floor = kFloor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Central differences of a loss of size |L| carry rounding noise of about
// eps |L| / h; gradients far below that are compared on an absolute scale.
inline double resolution_floor(double loss) {
  return std::max(kFloor, 1e4 * std::numeric_limits<double>::epsilon() * std::abs(loss) / kStep);
}

// Largest relative error between `analytic` and central differences of
// `loss(net)` over every parameter of `net`.
template <class Net, class Loss>
double max_relative_error(const Net& net, const Net& analytic, Loss&& loss) {
  using autosmote::nn::flatten;
  using autosmote::nn::unflatten;
  const autosmote::Vector base = flatten(net);
  const autosmote::Vector grad = flatten(analytic);
  const double floor = resolution_floor(loss(net));
  Net probe = net;
  double worst = 0.0;
  for (autosmote::Index i = 0; i < base.size(); ++i) {
    autosmote::Vector p = base;
    p(i) = base(i) + kStep;
    unflatten(probe, p);
    const double up = loss(probe);
    p(i) = base(i) - kStep;
    unflatten(probe, p);
    const double down = loss(probe);
    worst = std::max(worst, relative_error(grad(i), (up - down) / (2 * kStep), floor));
  }
  return worst;
}

// Smallest |pre-activation| of any ReLU in the trunk over the given inputs.
// Finite differences straddling a kink are meaningless, so callers redraw
// instances that come too close.
inline double relu_margin(const autosmote::nn::Mlp& net, const autosmote::Matrix& inputs) {
  autosmote::nn::MlpTape tape;
  autosmote::nn::forward(net, inputs, &tape);
  double m = std::numeric_limits<double>::infinity();
  const std::size_t activated = net.activate_output ? tape.pre.size() : tape.pre.size() - 1;
  for (std::size_t l = 0; l < activated; ++l) m = std::min(m, tape.pre[l].cwiseAbs().minCoeff());
  return m;
}

}  // namespace gradcheck
