#include "bevrl/hazard.hpp"

#include <stdexcept>
#include <string>

namespace bevrl {

HazardValue hazard(const Mask& route, const std::vector<float>& pred) {
  size_t n = route.data.size();
  if (pred.size() != n)
    throw std::invalid_argument("hazard: route has " + std::to_string(n) +
                                " pixels, pred has " + std::to_string(pred.size()));
  if (n == 0) throw std::invalid_argument("hazard: empty masks");
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double d = static_cast<double>(route.data[i] ? 1 : 0) - pred[i];
    acc += d * d;
  }
  HazardValue h;
  h.raw = -0.5 * acc;
  h.normalized = h.raw / static_cast<double>(n);
  return h;
}

HazardValue hazard_from_latent(const MultiHeadVae& model, const std::vector<float>& mu,
                               const Mask& route) {
  if (!model.config().head_pred)
    throw std::invalid_argument(
        "hazard_from_latent: model has no prediction head (rec-only ablation)");
  if (route.height != model.config().height || route.width != model.config().width)
    throw std::invalid_argument("hazard_from_latent: route mask shape mismatch");
  return hazard(route, model.decode_pred(mu));
}

}  // namespace bevrl
