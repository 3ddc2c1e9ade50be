// Criterion 6: VAE trainability -- overfitting 32 frames at 32x32 drives
// the Eq. 6 loss monotonically down over the first 10 epochs (at most
// one non-monotone epoch) and reaches plan/pred mask IoU >= 0.6 within
// 5000 optimizer steps, in under 10 CPU minutes.

#include <chrono>
#include <sstream>

#include "acceptance.hpp"
#include "bevrl/vae.hpp"

using namespace bevrl;

namespace {

struct IouPair {
  double plan = 0, pred = 0;
};

IouPair mean_iou(const MultiHeadVae& model, const std::vector<Record>& records,
                 const std::vector<uint32_t>& indices) {
  VaeBatch batch = make_vae_batch(records, indices, 0, indices.size());
  auto [mu, log_sigma] = model.encode(batch.x);
  HeadOutputs out = model.decode(mu);
  int hw = model.config().height * model.config().width;
  IouPair iou;
  for (size_t i = 0; i < indices.size(); ++i) {
    const Record& rec = records[indices[i]];
    std::vector<float> plan(out.plan.data().begin() + i * hw,
                            out.plan.data().begin() + (i + 1) * hw);
    std::vector<float> pred(out.pred.data().begin() + i * hw,
                            out.pred.data().begin() + (i + 1) * hw);
    iou.plan += mask_iou(rec.plan, plan);
    iou.pred += mask_iou(rec.pred, pred);
  }
  iou.plan /= indices.size();
  iou.pred /= indices.size();
  return iou;
}

}  // namespace

int main() {
  accept::Report report;
  auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  CollectConfig cc;
  cc.kind = ScenarioKind::kRoundabout;
  cc.n_frames = 32;
  cc.n_agents = 10;
  cc.seed = 20260825;
  cc.spec.height = 32;
  cc.spec.width = 32;
  std::vector<Record> records = collect(cc);
  std::vector<uint32_t> all(records.size());
  for (uint32_t i = 0; i < all.size(); ++i) all[i] = i;

  VaeConfig cfg;
  cfg.height = 32;
  cfg.width = 32;
  cfg.latent = 20;
  cfg.enc_channels = {8, 16, 32};
  MultiHeadVae model(cfg, 20260825);

  TrainVaeOptions opt;
  opt.batch_size = 8;
  opt.lr = 1e-3f;
  opt.seed = 20260825;
  const int steps_per_epoch =
      static_cast<int>((records.size() + opt.batch_size - 1) / opt.batch_size);

  // Phase 1: the first 10 epochs, monotonicity check.
  opt.epochs = 10;
  auto log = train_vae(model, records, all, opt);
  int non_monotone = 0;
  for (size_t i = 1; i < log.size(); ++i)
    if (log[i].total > log[i - 1].total) ++non_monotone;
  int steps = steps_per_epoch * opt.epochs;
  {
    std::ostringstream os;
    os << "epoch losses " << log.front().total << " -> " << log.back().total << ", "
       << non_monotone << " non-monotone epoch(s)";
    report.note(os.str());
  }

  // Phase 2: keep overfitting until both mask heads clear IoU 0.6 or the
  // 5000-step budget runs out.
  IouPair iou = mean_iou(model, records, all);
  int iou_steps = steps;
  bool reached = iou.plan >= 0.6 && iou.pred >= 0.6;
  opt.epochs = 25;
  while (!reached && steps + steps_per_epoch * opt.epochs <= 5000) {
    train_vae(model, records, all, opt);
    steps += steps_per_epoch * opt.epochs;
    iou = mean_iou(model, records, all);
    iou_steps = steps;
    reached = iou.plan >= 0.6 && iou.pred >= 0.6;
    std::ostringstream os;
    os << "step " << steps << ": plan IoU " << iou.plan << ", pred IoU " << iou.pred;
    report.note(os.str());
  }

  double secs = elapsed();
  std::ostringstream os;
  os << non_monotone << " non-monotone epoch(s); plan IoU " << iou.plan << ", pred IoU "
     << iou.pred << " after " << iou_steps << " steps; " << secs << " s";
  report.line(6,
              "VAE overfits 32 frames: near-monotone first 10 epochs, mask IoU >= 0.6 "
              "within 5k steps, < 10 min",
              non_monotone <= 1 && reached && secs < 600.0, os.str());
  return report.exit_code();
}
