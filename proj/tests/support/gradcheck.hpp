#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "nco/autodiff.hpp"
#include "nco/model.hpp"

namespace nco::testing {

/// Cross-entropy of the target under the model at `state`.
inline double model_loss(const model::ModelParams& params, std::span<const tsp::Point> coords,
                         const model::ConstructionState& state, std::size_t target_row, double n_scale) {
  ad::Tape tape;
  const auto bound = model::BoundParams::bind(tape, params, false);
  const auto g = model::build_step(bound, coords, state, n_scale);
  const std::size_t t[] = {target_row};
  return ad::masked_cross_entropy(g.logits, g.mask, t).item();
}

/// Max relative error between backward() and central differences over every
/// parameter scalar, using |a - c| / max(|a| + |c|, floor). Some gradients
/// are exactly zero (key biases shift every score in a row equally), so the
/// floor keeps round-off in the central difference from reading as error.
inline double model_gradient_error(const model::ModelParams& params, std::span<const tsp::Point> coords,
                                   const model::ConstructionState& state, std::size_t target_row,
                                   double n_scale, double eps = 1e-5, double floor = 1e-6) {
  ad::Tape tape;
  const auto bound = model::BoundParams::bind(tape, params, true);
  const auto g = model::build_step(bound, coords, state, n_scale);
  const std::size_t t[] = {target_row};
  tape.backward(ad::masked_cross_entropy(g.logits, g.mask, t));
  auto grads = model::ModelParams::zeros(params.config);
  bound.accumulate_grads(grads);
  const auto analytic = grads.flatten();

  auto flat = params.flatten();
  auto probe = params;
  double worst = 0.0;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double keep = flat[i];
    flat[i] = keep + eps;
    probe.assign(flat);
    const double up = model_loss(probe, coords, state, target_row, n_scale);
    flat[i] = keep - eps;
    probe.assign(flat);
    const double down = model_loss(probe, coords, state, target_row, n_scale);
    flat[i] = keep;
    const double central = (up - down) / (2.0 * eps);
    const double err = std::abs(analytic[i] - central) / std::max(std::abs(analytic[i]) + std::abs(central), floor);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace nco::testing
