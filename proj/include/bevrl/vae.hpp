#pragma once

// Multi-head beta-VAE: shared conv encoder to a Gaussian latent, three
// mirrored transposed-conv decoder heads (RGB scene, ego plan mask,
// others' prediction mask), the weighted ELBO loss, training loop and
// latent traversal.

#include <functional>
#include <string>
#include <vector>

#include "bevrl/dataset.hpp"
#include "bevrl/nn.hpp"

namespace bevrl {

struct LossWeights {
  float rgb = 1.0f;
  float plan = 1.0f;
  float pred = 50.0f;
  float kl = 50.0f;
};

struct VaeConfig {
  int height = 64;
  int width = 64;
  int in_channels = kBevChannels;
  int latent = 20;
  std::vector<int> enc_channels{32, 64, 128, 256};
  bool head_rgb = true;
  bool head_plan = true;
  bool head_pred = true;
};

struct HeadOutputs {
  tc::Tensor<float> rgb;   // [B,3,H,W], invalid if head absent
  tc::Tensor<float> plan;  // [B,1,H,W]
  tc::Tensor<float> pred;  // [B,1,H,W]
};

struct LossBreakdown {
  double recon_rgb = 0, recon_plan = 0, recon_pred = 0, kl = 0, total = 0;
};

// Dense batch of inputs and targets assembled from dataset records.
struct VaeBatch {
  tc::Tensor<float> x;     // [B,11,H,W]
  tc::Tensor<float> rgb;   // [B,3,H,W]
  tc::Tensor<float> plan;  // [B,1,H,W]
  tc::Tensor<float> pred;  // [B,1,H,W]
  int size = 0;
};

VaeBatch make_vae_batch(const std::vector<Record>& records,
                        const std::vector<uint32_t>& indices, size_t offset,
                        size_t batch_size);

class MultiHeadVae {
 public:
  MultiHeadVae() = default;
  MultiHeadVae(const VaeConfig& cfg, uint32_t seed);

  const VaeConfig& config() const { return cfg_; }

  // x: [B,11,H,W] -> (mu, log_sigma), each [B,latent].
  std::pair<tc::Tensor<float>, tc::Tensor<float>> encode(const tc::Tensor<float>& x) const;
  HeadOutputs decode(const tc::Tensor<float>& z) const;

  // Convenience: single frame -> mu as a plain vector (eval mode, z := mu).
  std::vector<float> encode_mu(const BevFrame& frame) const;
  // Decoded pred-head probability map for a single latent vector.
  std::vector<float> decode_pred(const std::vector<float>& z) const;

  std::vector<tc::Tensor<float>*> parameters();
  void set_trainable(bool on);
  int64_t param_count() const;

  void save(const std::string& path) const;
  static MultiHeadVae load(const std::string& path);

  const tc::Network<float>& encoder() const { return enc_; }

 private:
  VaeConfig cfg_;
  tc::Network<float> enc_;       // conv trunk + flatten
  tc::Network<float> mu_head_;   // linear -> latent
  tc::Network<float> ls_head_;   // linear -> latent
  tc::Network<float> dec_rgb_, dec_plan_, dec_pred_;
};

struct VaeLossResult {
  tc::Tensor<float> total;  // scalar, differentiable
  LossBreakdown values;
};

// Eq.-6-style objective: BCE summed over pixels, averaged over the batch,
// plus the closed-form KL, combined with the per-head weights. Heads the
// model lacks contribute zero.
VaeLossResult multihead_loss(const HeadOutputs& outputs, const VaeBatch& targets,
                             const tc::Tensor<float>& mu,
                             const tc::Tensor<float>& log_sigma,
                             const LossWeights& weights);

struct TrainVaeOptions {
  LossWeights weights;
  int epochs = 20;
  int batch_size = 32;
  float lr = 1e-3f;
  uint32_t seed = 1;
  std::string out_dir;  // empty: no checkpoints/CSV written
  std::function<void(int, const LossBreakdown&)> on_epoch;
};

// Returns the per-epoch loss log (averaged over batches).
std::vector<LossBreakdown> train_vae(MultiHeadVae& model,
                                     const std::vector<Record>& records,
                                     const std::vector<uint32_t>& split,
                                     const TrainVaeOptions& opt);

struct LatentStats {
  std::vector<float> mean;   // per-dim mean of mu over a dataset
  std::vector<float> stddev;
};

LatentStats latent_stats(const MultiHeadVae& model, const std::vector<Record>& records);

// k columns x 3 head rows; element i swept mu_i - s_i .. mu_i + s_i where
// s_i comes from the dataset statistic. Mask heads render as grayscale.
RgbImage traverse_latent(const MultiHeadVae& model, const BevFrame& frame, int element,
                         int steps, const LatentStats& stats);

double mask_iou(const Mask& a, const std::vector<float>& probs, float threshold = 0.5f);

}  // namespace bevrl
