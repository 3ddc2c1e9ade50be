#include "bevrl/dqn.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace bevrl {

using tc::LayerSpec;
using tc::Network;
using tc::Tensor;

RewardBreakdown compute_reward(const StepEvents& events, int action, ScenarioKind kind,
                               const RewardConfig& cfg) {
  EgoAction a = decode_action(action);
  RewardBreakdown b;
  if (events.collision) b.r_c = cfg.collision;
  b.r_v = events.speed;
  if (events.speed > cfg.speed_target) b.r_v += cfg.overspeed;
  if (events.out_of_lane) b.r_o = cfg.out_of_lane;
  b.r_alpha = -cfg.steer_coeff * a.steer_cmd * a.steer_cmd;
  b.r_w = -cfg.lat_accel_coeff * std::abs(events.lateral_accel);
  if (events.red_light_violation && kind == ScenarioKind::kFiveWay)
    b.r_tl = cfg.red_light;
  b.c = cfg.time_constant;
  b.total = b.r_c + b.r_v + b.r_o + b.r_alpha + b.r_w + b.r_tl + b.c;
  return b;
}

std::string variant_name(DqnVariant v) {
  switch (v) {
    case DqnVariant::kRec: return "rec";
    case DqnVariant::kRecPlan: return "rec_plan";
    case DqnVariant::kRecPred: return "rec_pred";
    case DqnVariant::kRecPlanPred: return "rec_plan_pred";
    case DqnVariant::kRecPlanPredHzrd: return "rec_plan_pred_hzrd";
    case DqnVariant::kCnnE2e: return "cnn_e2e";
  }
  throw std::invalid_argument("variant_name: bad variant");
}

DqnVariant parse_variant(const std::string& name) {
  for (auto v : {DqnVariant::kRec, DqnVariant::kRecPlan, DqnVariant::kRecPred,
                 DqnVariant::kRecPlanPred, DqnVariant::kRecPlanPredHzrd,
                 DqnVariant::kCnnE2e})
    if (variant_name(v) == name) return v;
  throw std::invalid_argument("unknown DQN variant '" + name + "'");
}

bool variant_uses_hazard(DqnVariant v) { return v == DqnVariant::kRecPlanPredHzrd; }

void variant_heads(DqnVariant v, bool& rgb, bool& plan, bool& pred) {
  rgb = true;
  plan = v == DqnVariant::kRecPlan || v == DqnVariant::kRecPlanPred ||
         v == DqnVariant::kRecPlanPredHzrd;
  pred = v == DqnVariant::kRecPred || v == DqnVariant::kRecPlanPred ||
         v == DqnVariant::kRecPlanPredHzrd;
}

void ReplayBuffer::push(Transition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[next_] = std::move(t);
    next_ = (next_ + 1) % capacity_;
  }
}

std::vector<const Transition*> ReplayBuffer::sample(size_t n, std::mt19937& rng) const {
  if (data_.empty()) throw std::invalid_argument("sample: empty buffer");
  std::uniform_int_distribution<size_t> pick(0, data_.size() - 1);
  std::vector<const Transition*> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) out.push_back(&data_[pick(rng)]);
  return out;
}

Network<float> make_q_mlp(int state_width, const std::vector<int>& hidden) {
  std::vector<LayerSpec> specs;
  int in = state_width;
  for (int h : hidden) {
    specs.push_back(LayerSpec::dense(in, h));
    specs.push_back(LayerSpec::relu());
    in = h;
  }
  specs.push_back(LayerSpec::dense(in, kNumActions));
  return Network<float>(std::move(specs), {state_width});
}

Network<float> make_q_cnn(int height, int width, const std::vector<int>& channels,
                          const std::vector<int>& hidden) {
  std::vector<LayerSpec> specs;
  int c = kBevChannels, h = height, w = width;
  for (int out : channels) {
    specs.push_back(LayerSpec::conv(c, out, 4, 2, 1));
    specs.push_back(LayerSpec::relu());
    c = out;
    h /= 2;
    w /= 2;
  }
  specs.push_back(LayerSpec::flatten());
  int in = c * h * w;
  for (int hd : hidden) {
    specs.push_back(LayerSpec::dense(in, hd));
    specs.push_back(LayerSpec::relu());
    in = hd;
  }
  specs.push_back(LayerSpec::dense(in, kNumActions));
  return Network<float>(std::move(specs), {kBevChannels, height, width});
}

double epsilon_at(int64_t step, const DqnConfig& cfg) {
  double frac = cfg.eps_decay_steps <= 0
                    ? 1.0
                    : std::min(1.0, static_cast<double>(step) / cfg.eps_decay_steps);
  return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac;
}

int select_action(const std::vector<float>& q_values, double eps, std::mt19937& rng) {
  if (q_values.size() != kNumActions)
    throw std::invalid_argument("select_action: expected 9 q-values");
  if (eps < 0.0 || eps > 1.0) throw std::invalid_argument("select_action: bad epsilon");
  if (eps > 0.0) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < eps) {
      std::uniform_int_distribution<int> pick(0, kNumActions - 1);
      return pick(rng);
    }
  }
  // std::max_element keeps the first maximum: ties break to the lowest index.
  return static_cast<int>(
      std::max_element(q_values.begin(), q_values.end()) - q_values.begin());
}

void sync_target(const Network<float>& source, Network<float>& target) {
  if (source.specs().size() != target.specs().size() ||
      source.param_count() != target.param_count())
    throw std::invalid_argument("sync_target: architecture mismatch");
  for (size_t i = 0; i < source.parameters().size(); ++i)
    target.parameters()[i].data() = source.parameters()[i].data();
}

namespace {

Tensor<float> batch_states(const Network<float>& net,
                           const std::vector<const Transition*>& batch, bool next) {
  std::vector<int> shape{static_cast<int>(batch.size())};
  shape.insert(shape.end(), net.input_shape().begin(), net.input_shape().end());
  std::vector<float> data;
  data.reserve(tc::shape_numel(shape));
  for (const auto* t : batch) {
    const auto& s = next ? t->s2 : t->s;
    data.insert(data.end(), s.begin(), s.end());
  }
  return Tensor<float>::from_data(std::move(shape), std::move(data));
}

}  // namespace

double dqn_update(Network<float>& net, const Network<float>& target,
                  const std::vector<const Transition*>& batch, double gamma,
                  tc::Adam<float>& adam) {
  if (batch.empty()) throw std::invalid_argument("dqn_update: empty batch");
  Tensor<float> s2 = batch_states(net, batch, true);
  Tensor<float> q2 = target.forward(s2).detach();
  int B = static_cast<int>(batch.size());
  std::vector<float> targets(B);
  std::vector<int> actions(B);
  for (int i = 0; i < B; ++i) {
    actions[i] = batch[i]->a;
    float best = q2.data()[static_cast<size_t>(i) * kNumActions];
    for (int a = 1; a < kNumActions; ++a)
      best = std::max(best, q2.data()[static_cast<size_t>(i) * kNumActions + a]);
    targets[i] = batch[i]->done
                     ? batch[i]->r
                     : batch[i]->r + static_cast<float>(gamma) * best;
  }
  Tensor<float> s = batch_states(net, batch, false);
  Tensor<float> q = net.forward(s);
  Tensor<float> loss = tc::td_loss(q, actions, targets);
  tc::backward(loss);
  adam.step(net.parameters());
  return loss.item();
}

std::vector<float> make_state(const WorldState& world, const MultiHeadVae* encoder,
                              DqnVariant variant, const RasterSpec& spec) {
  BevFrame frame = rasterize_input(world, spec);
  if (variant == DqnVariant::kCnnE2e) return frame.to_floats();
  if (!encoder) throw std::invalid_argument("make_state: variant needs an encoder");
  std::vector<float> s = encoder->encode_mu(frame);
  if (variant_uses_hazard(variant)) {
    if (!encoder->config().head_pred)
      throw std::invalid_argument(
          "make_state: hazard variant needs a prediction-head encoder");
    Mask route(frame.height, frame.width);
    size_t px = static_cast<size_t>(frame.height) * frame.width;
    std::copy_n(frame.data.begin() + static_cast<size_t>(kChRoute) * px, px,
                route.data.begin());
    s.push_back(static_cast<float>(hazard_from_latent(*encoder, s, route).normalized));
  }
  return s;
}

namespace {

Network<float> build_policy_net(const MultiHeadVae* encoder, DqnVariant variant,
                                const TrainDqnOptions& opt, std::mt19937& rng) {
  Network<float> net;
  if (variant == DqnVariant::kCnnE2e) {
    net = make_q_cnn(opt.env.spec.height, opt.env.spec.width, opt.dqn.cnn_channels,
                     opt.dqn.hidden);
  } else {
    if (!encoder) throw std::invalid_argument("train_dqn: variant needs an encoder");
    if (variant_uses_hazard(variant) && !encoder->config().head_pred)
      throw std::invalid_argument(
          "train_dqn: hazard variant needs a prediction-head encoder");
    int width = encoder->config().latent + (variant_uses_hazard(variant) ? 1 : 0);
    net = make_q_mlp(width, opt.dqn.hidden);
  }
  net.init(rng);
  return net;
}

}  // namespace

TrainDqnResult train_dqn(const MultiHeadVae* encoder, DqnVariant variant,
                         const TrainDqnOptions& opt) {
  std::mt19937 rng(opt.seed);
  Network<float> net = build_policy_net(encoder, variant, opt, rng);
  Network<float> target = build_policy_net(encoder, variant, opt, rng);
  sync_target(net, target);
  tc::Adam<float> adam(opt.dqn.lr);
  ReplayBuffer buffer(opt.dqn.buffer_capacity);

  std::ofstream csv;
  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    csv.open(opt.out_dir + "/episodes.csv");
    csv << "episode,variant,seed,return,steps,cause,n_agents\n";
  }

  TrainDqnResult result;
  int64_t global_step = 0;
  for (int ep = 0; ep < opt.dqn.episodes; ++ep) {
    int n_agents = opt.curriculum.empty() ? opt.env.n_agents
                                          : curriculum_agents(ep, opt.curriculum);
    WorldState world = spawn_scenario(opt.env.kind, n_agents,
                                      opt.env.aggressive_fraction,
                                      opt.seed * 10007u + static_cast<uint32_t>(ep));
    std::vector<float> s = make_state(world, encoder, variant, opt.env.spec);
    EpisodeLog log;
    log.episode = ep;
    log.n_agents = n_agents;
    log.cause = "timeout";
    for (int t = 0; t < opt.dqn.max_episode_steps; ++t) {
      std::vector<int> shape{1};
      shape.insert(shape.end(), net.input_shape().begin(), net.input_shape().end());
      Tensor<float> st = Tensor<float>::from_data(shape, s);
      std::vector<float> q = net.forward(st).data();
      int a = select_action(q, epsilon_at(global_step, opt.dqn), rng);
      StepEvents ev = step(world, decode_action(a));
      RewardBreakdown r = compute_reward(ev, a, opt.env.kind, opt.reward);
      bool off_route = distance_to_route(world.ego.pos(), world.route.pts) > 10.0;
      bool done = ev.collision || ev.reached_goal || off_route;
      std::vector<float> s2 = make_state(world, encoder, variant, opt.env.spec);
      buffer.push({s, s2, a, static_cast<float>(r.total), done});
      if (static_cast<int>(buffer.size()) >= opt.dqn.learn_start) {
        auto batch = buffer.sample(opt.dqn.batch_size, rng);
        dqn_update(net, target, batch, opt.dqn.gamma, adam);
      }
      ++global_step;
      if (global_step % opt.dqn.target_sync == 0) sync_target(net, target);
      log.ret += r.total;
      log.steps = t + 1;
      s = std::move(s2);
      if (done) {
        log.cause = ev.collision ? "collision" : ev.reached_goal ? "goal" : "off_route";
        break;
      }
    }
    if (csv.is_open())
      csv << log.episode << ',' << variant_name(variant) << ',' << opt.seed << ','
          << log.ret << ',' << log.steps << ',' << log.cause << ',' << log.n_agents
          << '\n';
    if (opt.on_episode) opt.on_episode(log);
    result.episodes.push_back(log);
  }
  if (!opt.out_dir.empty()) save_policy(opt.out_dir + "/policy.bltm", net);
  result.policy = std::move(net);
  return result;
}

EvalMetrics evaluate(const Network<float>& policy, const MultiHeadVae* encoder,
                     DqnVariant variant, const EnvConfig& env, int n_episodes,
                     const RewardConfig& reward, uint32_t seed) {
  if (n_episodes <= 0) throw std::invalid_argument("evaluate: n_episodes must be > 0");
  EvalMetrics m;
  std::mt19937 rng(seed);
  const int max_steps = env.max_steps;
  for (int ep = 0; ep < n_episodes; ++ep) {
    WorldState world = spawn_scenario(env.kind, env.n_agents, env.aggressive_fraction,
                                      seed * 7919u + static_cast<uint32_t>(ep));
    EpisodeLog log;
    log.episode = ep;
    log.n_agents = env.n_agents;
    log.cause = "timeout";
    int red_lights = 0;
    for (int t = 0; t < max_steps; ++t) {
      std::vector<float> s = make_state(world, encoder, variant, env.spec);
      std::vector<int> shape{1};
      shape.insert(shape.end(), policy.input_shape().begin(),
                   policy.input_shape().end());
      std::vector<float> q =
          policy.forward(Tensor<float>::from_data(shape, std::move(s))).data();
      int a = select_action(q, 0.0, rng);
      StepEvents ev = step(world, decode_action(a));
      log.ret += compute_reward(ev, a, env.kind, reward).total;
      log.steps = t + 1;
      red_lights += ev.red_light_violation ? 1 : 0;
      bool off_route = distance_to_route(world.ego.pos(), world.route.pts) > 10.0;
      if (ev.collision || ev.reached_goal || off_route) {
        log.cause = ev.collision ? "collision" : ev.reached_goal ? "goal" : "off_route";
        break;
      }
    }
    m.mean_return += log.ret;
    m.success_rate += log.cause == "goal" ? 1.0 : 0.0;
    m.collision_rate += log.cause == "collision" ? 1.0 : 0.0;
    m.red_light_violations += red_lights;
    m.episodes.push_back(log);
  }
  m.mean_return /= n_episodes;
  m.success_rate /= n_episodes;
  m.collision_rate /= n_episodes;
  m.red_light_violations /= n_episodes;
  return m;
}

void save_policy(const std::string& path, const Network<float>& policy) {
  tc::save_networks<float>(path, {{"policy", &policy}});
}

Network<float> load_policy(const std::string& path) {
  auto nets = tc::load_networks<float>(path);
  auto it = nets.find("policy");
  if (it == nets.end())
    throw std::runtime_error(path + ": checkpoint has no 'policy' network");
  return std::move(it->second);
}

}  // namespace bevrl
