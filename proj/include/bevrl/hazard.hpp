#pragma once

// Scalar hazard signal: log-likelihood of the route mask under
// unit-variance pixel Gaussians centered on the prediction head's output
// (constant term dropped), plus a pixel-count-normalized form for the
// policy input.

#include <vector>

#include "bevrl/raster.hpp"
#include "bevrl/vae.hpp"

namespace bevrl {

struct HazardValue {
  double raw = 0.0;         // -0.5 * sum_i (r_i - p_i)^2, always <= 0
  double normalized = 0.0;  // raw / pixel count, in [-0.5, 0]
};

HazardValue hazard(const Mask& route, const std::vector<float>& pred);

// Decodes pred = p(.|mu) from the model's prediction head, then scores the
// route mask against it. Models without that head cannot produce a hazard.
HazardValue hazard_from_latent(const MultiHeadVae& model, const std::vector<float>& mu,
                               const Mask& route);

}  // namespace bevrl
