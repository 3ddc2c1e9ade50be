#include "bevrl/vae.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace bevrl {

using tc::LayerSpec;
using tc::Network;
using tc::Tensor;

namespace {

// Encoder trunk: strided 4x4 convs halving the resolution per block.
Network<float> build_encoder(const VaeConfig& cfg) {
  std::vector<LayerSpec> specs;
  int c = cfg.in_channels;
  for (int out : cfg.enc_channels) {
    specs.push_back(LayerSpec::conv(c, out, 4, 2, 1));
    specs.push_back(LayerSpec::relu());
    c = out;
  }
  specs.push_back(LayerSpec::flatten());
  return Network<float>(std::move(specs), {cfg.in_channels, cfg.height, cfg.width});
}

// Mirrored decoder: linear to the trunk's bottom feature map, then
// transposed convs back up to out_ch x H x W, sigmoid at the end.
Network<float> build_decoder(const VaeConfig& cfg, int out_ch) {
  int blocks = static_cast<int>(cfg.enc_channels.size());
  int h0 = cfg.height >> blocks;
  int w0 = cfg.width >> blocks;
  if (h0 <= 0 || w0 <= 0 || (h0 << blocks) != cfg.height || (w0 << blocks) != cfg.width)
    throw std::invalid_argument("vae: raster size not divisible by 2^blocks");
  int c0 = cfg.enc_channels.back();
  std::vector<LayerSpec> specs;
  specs.push_back(LayerSpec::dense(cfg.latent, c0 * h0 * w0));
  specs.push_back(LayerSpec::to_shape({c0, h0, w0}));
  for (int i = blocks - 1; i >= 0; --i) {
    int in = cfg.enc_channels[i];
    int out = i > 0 ? cfg.enc_channels[i - 1] : out_ch;
    specs.push_back(LayerSpec::relu());
    specs.push_back(LayerSpec::tconv(in, out, 4, 2, 1));
  }
  specs.push_back(LayerSpec::sigmoid());
  return Network<float>(std::move(specs), {cfg.latent});
}

std::vector<int> infer_enc_channels(const Network<float>& enc) {
  std::vector<int> ch;
  for (const auto& l : enc.specs())
    if (l.kind == tc::LayerKind::kConv) ch.push_back(l.out_ch);
  return ch;
}

}  // namespace

MultiHeadVae::MultiHeadVae(const VaeConfig& cfg, uint32_t seed) : cfg_(cfg) {
  enc_ = build_encoder(cfg);
  int flat = enc_.output_shape()[0];
  mu_head_ = Network<float>({LayerSpec::dense(flat, cfg.latent)}, {flat});
  ls_head_ = Network<float>({LayerSpec::dense(flat, cfg.latent)}, {flat});
  std::mt19937 rng(seed);
  enc_.init(rng);
  mu_head_.init(rng);
  ls_head_.init(rng);
  if (cfg.head_rgb) {
    dec_rgb_ = build_decoder(cfg, 3);
    dec_rgb_.init(rng);
  }
  if (cfg.head_plan) {
    dec_plan_ = build_decoder(cfg, 1);
    dec_plan_.init(rng);
  }
  if (cfg.head_pred) {
    dec_pred_ = build_decoder(cfg, 1);
    dec_pred_.init(rng);
  }
}

std::pair<Tensor<float>, Tensor<float>> MultiHeadVae::encode(
    const Tensor<float>& x) const {
  Tensor<float> h = enc_.forward(x);
  return {mu_head_.forward(h), ls_head_.forward(h)};
}

HeadOutputs MultiHeadVae::decode(const Tensor<float>& z) const {
  HeadOutputs out;
  if (cfg_.head_rgb) out.rgb = dec_rgb_.forward(z);
  if (cfg_.head_plan) out.plan = dec_plan_.forward(z);
  if (cfg_.head_pred) out.pred = dec_pred_.forward(z);
  return out;
}

std::vector<float> MultiHeadVae::encode_mu(const BevFrame& frame) const {
  if (frame.height != cfg_.height || frame.width != cfg_.width)
    throw std::invalid_argument("encode_mu: frame shape mismatch");
  Tensor<float> x = Tensor<float>::from_data(
      {1, cfg_.in_channels, cfg_.height, cfg_.width}, frame.to_floats());
  return encode(x).first.data();
}

std::vector<float> MultiHeadVae::decode_pred(const std::vector<float>& z) const {
  if (!cfg_.head_pred)
    throw std::invalid_argument("decode_pred: model has no prediction head");
  if (static_cast<int>(z.size()) != cfg_.latent)
    throw std::invalid_argument("decode_pred: latent width mismatch");
  Tensor<float> zt = Tensor<float>::from_data({1, cfg_.latent}, z);
  return dec_pred_.forward(zt).data();
}

std::vector<Tensor<float>*> MultiHeadVae::parameters() {
  std::vector<Tensor<float>*> out;
  auto grab = [&](Network<float>& n) {
    for (auto& p : n.parameters()) out.push_back(&p);
  };
  grab(enc_);
  grab(mu_head_);
  grab(ls_head_);
  if (cfg_.head_rgb) grab(dec_rgb_);
  if (cfg_.head_plan) grab(dec_plan_);
  if (cfg_.head_pred) grab(dec_pred_);
  return out;
}

void MultiHeadVae::set_trainable(bool on) {
  enc_.set_trainable(on);
  mu_head_.set_trainable(on);
  ls_head_.set_trainable(on);
  if (cfg_.head_rgb) dec_rgb_.set_trainable(on);
  if (cfg_.head_plan) dec_plan_.set_trainable(on);
  if (cfg_.head_pred) dec_pred_.set_trainable(on);
}

int64_t MultiHeadVae::param_count() const {
  int64_t n = enc_.param_count() + mu_head_.param_count() + ls_head_.param_count();
  if (cfg_.head_rgb) n += dec_rgb_.param_count();
  if (cfg_.head_plan) n += dec_plan_.param_count();
  if (cfg_.head_pred) n += dec_pred_.param_count();
  return n;
}

void MultiHeadVae::save(const std::string& path) const {
  std::map<std::string, const Network<float>*> nets{
      {"encoder", &enc_}, {"mu", &mu_head_}, {"log_sigma", &ls_head_}};
  if (cfg_.head_rgb) nets["dec_rgb"] = &dec_rgb_;
  if (cfg_.head_plan) nets["dec_plan"] = &dec_plan_;
  if (cfg_.head_pred) nets["dec_pred"] = &dec_pred_;
  tc::save_networks(path, nets);
}

MultiHeadVae MultiHeadVae::load(const std::string& path) {
  auto nets = tc::load_networks<float>(path);
  auto take = [&](const char* name) -> Network<float>& {
    auto it = nets.find(name);
    if (it == nets.end())
      throw std::runtime_error(path + ": checkpoint missing network '" +
                               std::string(name) + "'");
    return it->second;
  };
  MultiHeadVae m;
  m.enc_ = std::move(take("encoder"));
  m.mu_head_ = std::move(take("mu"));
  m.ls_head_ = std::move(take("log_sigma"));
  m.cfg_.in_channels = m.enc_.input_shape()[0];
  m.cfg_.height = m.enc_.input_shape()[1];
  m.cfg_.width = m.enc_.input_shape()[2];
  m.cfg_.latent = m.mu_head_.output_shape()[0];
  m.cfg_.enc_channels = infer_enc_channels(m.enc_);
  m.cfg_.head_rgb = nets.count("dec_rgb") > 0;
  m.cfg_.head_plan = nets.count("dec_plan") > 0;
  m.cfg_.head_pred = nets.count("dec_pred") > 0;
  if (m.cfg_.head_rgb) m.dec_rgb_ = std::move(nets.at("dec_rgb"));
  if (m.cfg_.head_plan) m.dec_plan_ = std::move(nets.at("dec_plan"));
  if (m.cfg_.head_pred) m.dec_pred_ = std::move(nets.at("dec_pred"));
  return m;
}

VaeBatch make_vae_batch(const std::vector<Record>& records,
                        const std::vector<uint32_t>& indices, size_t offset,
                        size_t batch_size) {
  if (offset >= indices.size()) throw std::out_of_range("make_vae_batch: offset");
  size_t n = std::min(batch_size, indices.size() - offset);
  const Record& first = records.at(indices[offset]);
  int h = first.bev.height, w = first.bev.width;
  size_t px = static_cast<size_t>(h) * w;
  VaeBatch b;
  b.size = static_cast<int>(n);
  std::vector<float> x, rgb, plan, pred;
  x.reserve(n * px * kBevChannels);
  rgb.reserve(n * px * 3);
  plan.reserve(n * px);
  pred.reserve(n * px);
  for (size_t k = 0; k < n; ++k) {
    const Record& r = records.at(indices[offset + k]);
    for (uint8_t v : r.bev.data) x.push_back(static_cast<float>(v));
    for (uint8_t v : r.rgb) rgb.push_back(v / 255.0f);
    for (uint8_t v : r.plan.data) plan.push_back(static_cast<float>(v));
    for (uint8_t v : r.pred.data) pred.push_back(static_cast<float>(v));
  }
  int bn = static_cast<int>(n);
  b.x = Tensor<float>::from_data({bn, kBevChannels, h, w}, std::move(x));
  b.rgb = Tensor<float>::from_data({bn, 3, h, w}, std::move(rgb));
  b.plan = Tensor<float>::from_data({bn, 1, h, w}, std::move(plan));
  b.pred = Tensor<float>::from_data({bn, 1, h, w}, std::move(pred));
  return b;
}

VaeLossResult multihead_loss(const HeadOutputs& outputs, const VaeBatch& targets,
                             const Tensor<float>& mu, const Tensor<float>& log_sigma,
                             const LossWeights& weights) {
  float inv_b = 1.0f / static_cast<float>(targets.size);
  VaeLossResult res;
  Tensor<float> total = Tensor<float>::scalar(0.0f);
  auto add_term = [&](const Tensor<float>& out, const Tensor<float>& tgt, float w,
                      double& slot) {
    Tensor<float> term =
        tc::scale(tc::bce_loss(out, tgt, tc::Reduction::kSum), inv_b);
    slot = term.item();
    total = tc::add(total, tc::scale(term, w));
  };
  if (outputs.rgb.valid()) add_term(outputs.rgb, targets.rgb, weights.rgb, res.values.recon_rgb);
  if (outputs.plan.valid())
    add_term(outputs.plan, targets.plan, weights.plan, res.values.recon_plan);
  if (outputs.pred.valid())
    add_term(outputs.pred, targets.pred, weights.pred, res.values.recon_pred);
  Tensor<float> kl = tc::kl_divergence(mu, log_sigma);
  res.values.kl = kl.item();
  total = tc::add(total, tc::scale(kl, weights.kl));
  res.values.total = total.item();
  res.total = total;
  return res;
}

std::vector<LossBreakdown> train_vae(MultiHeadVae& model,
                                     const std::vector<Record>& records,
                                     const std::vector<uint32_t>& split,
                                     const TrainVaeOptions& opt) {
  if (records.empty() || split.empty())
    throw std::invalid_argument("train_vae: empty dataset or split");
  std::mt19937 rng(opt.seed);
  tc::Adam<float> adam(opt.lr);
  // Tensor copies share storage, so this list aliases the live parameters.
  std::vector<Tensor<float>> params;
  for (auto* p : model.parameters()) params.push_back(*p);

  std::ofstream csv;
  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    csv.open(opt.out_dir + "/vae_loss.csv");
    csv << "epoch,recon_rgb,recon_plan,recon_pred,kl,total\n";
  }

  std::vector<uint32_t> order(split);
  std::vector<LossBreakdown> log;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    LossBreakdown epoch_sum;
    int n_batches = 0;
    for (size_t off = 0; off < order.size(); off += opt.batch_size) {
      VaeBatch batch = make_vae_batch(records, order, off, opt.batch_size);
      auto [mu, log_sigma] = model.encode(batch.x);
      Tensor<float> z = tc::reparameterize(mu, log_sigma, rng);
      HeadOutputs outs = model.decode(z);
      VaeLossResult loss = multihead_loss(outs, batch, mu, log_sigma, opt.weights);
      tc::backward(loss.total);
      adam.step(params);
      epoch_sum.recon_rgb += loss.values.recon_rgb;
      epoch_sum.recon_plan += loss.values.recon_plan;
      epoch_sum.recon_pred += loss.values.recon_pred;
      epoch_sum.kl += loss.values.kl;
      epoch_sum.total += loss.values.total;
      ++n_batches;
    }
    LossBreakdown avg;
    avg.recon_rgb = epoch_sum.recon_rgb / n_batches;
    avg.recon_plan = epoch_sum.recon_plan / n_batches;
    avg.recon_pred = epoch_sum.recon_pred / n_batches;
    avg.kl = epoch_sum.kl / n_batches;
    avg.total = epoch_sum.total / n_batches;
    log.push_back(avg);
    if (csv.is_open())
      csv << epoch << ',' << avg.recon_rgb << ',' << avg.recon_plan << ','
          << avg.recon_pred << ',' << avg.kl << ',' << avg.total << '\n';
    if (!opt.out_dir.empty())
      model.save(opt.out_dir + "/vae_epoch_" + std::to_string(epoch) + ".bltm");
    if (opt.on_epoch) opt.on_epoch(epoch, avg);
  }
  if (!opt.out_dir.empty()) model.save(opt.out_dir + "/vae_final.bltm");
  return log;
}

LatentStats latent_stats(const MultiHeadVae& model, const std::vector<Record>& records) {
  if (records.empty()) throw std::invalid_argument("latent_stats: empty dataset");
  int d = model.config().latent;
  std::vector<double> sum(d, 0.0), sq(d, 0.0);
  for (const auto& r : records) {
    auto mu = model.encode_mu(r.bev);
    for (int i = 0; i < d; ++i) {
      sum[i] += mu[i];
      sq[i] += static_cast<double>(mu[i]) * mu[i];
    }
  }
  double n = static_cast<double>(records.size());
  LatentStats s;
  s.mean.resize(d);
  s.stddev.resize(d);
  for (int i = 0; i < d; ++i) {
    s.mean[i] = static_cast<float>(sum[i] / n);
    double var = std::max(0.0, sq[i] / n - (sum[i] / n) * (sum[i] / n));
    s.stddev[i] = static_cast<float>(std::sqrt(var));
  }
  return s;
}

RgbImage traverse_latent(const MultiHeadVae& model, const BevFrame& frame, int element,
                         int steps, const LatentStats& stats) {
  const VaeConfig& cfg = model.config();
  if (element < 0 || element >= cfg.latent)
    throw std::invalid_argument("traverse_latent: element out of range");
  if (steps < 1) throw std::invalid_argument("traverse_latent: steps must be >= 1");
  std::vector<float> mu = model.encode_mu(frame);
  float s_i = stats.stddev.at(element);
  int h = cfg.height, w = cfg.width;
  RgbImage grid(3 * h, steps * w);
  for (int k = 0; k < steps; ++k) {
    std::vector<float> z = mu;
    // k=1 degenerates to decoding mu itself.
    float t = steps == 1 ? 0.0f : -1.0f + 2.0f * k / (steps - 1);
    z[element] = mu[element] + t * s_i;
    Tensor<float> zt = Tensor<float>::from_data({1, cfg.latent}, z);
    HeadOutputs outs = model.decode(zt);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        size_t px = static_cast<size_t>(r) * w + c;
        for (int ch = 0; ch < 3; ++ch) {
          float v = outs.rgb.valid()
                        ? outs.rgb.data()[static_cast<size_t>(ch) * h * w + px]
                        : 0.0f;
          grid.at(ch, r, k * w + c) = v;
        }
        float plan = outs.plan.valid() ? outs.plan.data()[px] : 0.0f;
        float pred = outs.pred.valid() ? outs.pred.data()[px] : 0.0f;
        for (int ch = 0; ch < 3; ++ch) {
          grid.at(ch, h + r, k * w + c) = plan;
          grid.at(ch, 2 * h + r, k * w + c) = pred;
        }
      }
  }
  return grid;
}

double mask_iou(const Mask& a, const std::vector<float>& probs, float threshold) {
  if (probs.size() != a.data.size())
    throw std::invalid_argument("mask_iou: size mismatch");
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < probs.size(); ++i) {
    bool p = probs[i] >= threshold;
    bool t = a.data[i] != 0;
    inter += p && t;
    uni += p || t;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

}  // namespace bevrl
