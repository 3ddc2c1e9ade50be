#pragma once

// DQN policy over (latent mean, hazard) states: reward shaping, replay
// buffer with a target network, epsilon-greedy control, the head-ablation
// state variants and the end-to-end CNN baseline.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bevrl/hazard.hpp"
#include "bevrl/vae.hpp"

namespace bevrl {

struct RewardConfig {
  double collision = -200.0;
  double speed_target = 10.0;     // m/s; above this the overspeed penalty fires
  double overspeed = -10.0;
  double out_of_lane = -1.0;      // beyond 2.5 m from the route
  double steer_coeff = 0.5;       // -0.5 * steer_cmd^2
  double lat_accel_coeff = 0.2;   // -0.2 * |lateral accel|
  double red_light = -10.0;       // intersection scenario only
  double time_constant = -0.1;
};

struct RewardBreakdown {
  double r_c = 0, r_v = 0, r_o = 0, r_alpha = 0, r_w = 0, r_tl = 0, c = 0;
  double total = 0;
};

RewardBreakdown compute_reward(const StepEvents& events, int action, ScenarioKind kind,
                               const RewardConfig& cfg);

enum class DqnVariant {
  kRec,
  kRecPlan,
  kRecPred,
  kRecPlanPred,
  kRecPlanPredHzrd,
  kCnnE2e,
};

std::string variant_name(DqnVariant v);
DqnVariant parse_variant(const std::string& name);
bool variant_uses_hazard(DqnVariant v);
// Head set the encoder must have been trained with for this variant.
void variant_heads(DqnVariant v, bool& rgb, bool& plan, bool& pred);

struct Transition {
  std::vector<float> s, s2;
  int a = 0;
  float r = 0;
  bool done = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(size_t capacity) : capacity_(capacity) {}
  void push(Transition t);
  size_t size() const { return data_.size(); }
  size_t capacity() const { return capacity_; }
  const Transition& at(size_t i) const { return data_[i]; }
  // Uniform with replacement; draw order is one u32 per sample.
  std::vector<const Transition*> sample(size_t n, std::mt19937& rng) const;

 private:
  std::vector<Transition> data_;
  size_t capacity_;
  size_t next_ = 0;  // ring write cursor once full
};

struct DqnConfig {
  double gamma = 0.99;
  int target_sync = 500;        // steps between psi' := psi
  double eps_start = 1.0;
  double eps_end = 0.05;
  int eps_decay_steps = 20000;
  int buffer_capacity = 50000;
  int batch_size = 64;
  float lr = 5e-4f;
  int learn_start = 500;        // min transitions before updates
  int episodes = 500;
  int max_episode_steps = 1000;
  std::vector<int> hidden{128, 64};
  std::vector<int> cnn_channels{8, 16, 32};  // e2e conv trunk
};

// Fully-connected Q network: hidden widths then 9 outputs.
tc::Network<float> make_q_mlp(int state_width, const std::vector<int>& hidden);
// End-to-end baseline: strided conv trunk straight off the BEV tensor.
tc::Network<float> make_q_cnn(int height, int width, const std::vector<int>& channels,
                              const std::vector<int>& hidden);

double epsilon_at(int64_t step, const DqnConfig& cfg);
int select_action(const std::vector<float>& q_values, double eps, std::mt19937& rng);
void sync_target(const tc::Network<float>& source, tc::Network<float>& target);

// One optimizer step on the TD objective; returns the batch loss.
double dqn_update(tc::Network<float>& net, const tc::Network<float>& target,
                  const std::vector<const Transition*>& batch, double gamma,
                  tc::Adam<float>& adam);

struct EnvConfig {
  ScenarioKind kind = ScenarioKind::kRoundabout;
  int n_agents = 0;
  double aggressive_fraction = 0.2;
  int max_steps = 1000;  // evaluation episode cap
  RasterSpec spec;
};

// Policy state assembly for one frame. For e2e the raw tensor is the state.
std::vector<float> make_state(const WorldState& world, const MultiHeadVae* encoder,
                              DqnVariant variant, const RasterSpec& spec);

struct EpisodeLog {
  int episode = 0;
  double ret = 0;
  int steps = 0;
  std::string cause;  // collision | goal | off_route | timeout
  int n_agents = 0;
};

struct TrainDqnOptions {
  DqnConfig dqn;
  RewardConfig reward;
  EnvConfig env;
  std::vector<CurriculumStage> curriculum;  // empty: fixed env.n_agents
  uint32_t seed = 1;
  std::string out_dir;  // empty: nothing written
  std::function<void(const EpisodeLog&)> on_episode;
};

struct TrainDqnResult {
  tc::Network<float> policy;
  std::vector<EpisodeLog> episodes;
};

TrainDqnResult train_dqn(const MultiHeadVae* encoder, DqnVariant variant,
                         const TrainDqnOptions& opt);

struct EvalMetrics {
  double mean_return = 0;
  double success_rate = 0;
  double collision_rate = 0;
  double red_light_violations = 0;  // mean per episode
  std::vector<EpisodeLog> episodes;
};

EvalMetrics evaluate(const tc::Network<float>& policy, const MultiHeadVae* encoder,
                     DqnVariant variant, const EnvConfig& env, int n_episodes,
                     const RewardConfig& reward, uint32_t seed);

void save_policy(const std::string& path, const tc::Network<float>& policy);
tc::Network<float> load_policy(const std::string& path);

}  // namespace bevrl
