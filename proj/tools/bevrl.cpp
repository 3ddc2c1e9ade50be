// Command-line front end: data collection, VAE/DQN training, evaluation,
// ablations, latent traversal, plotting and dataset stats.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "bevrl/dataset.hpp"
#include "bevrl/dqn.hpp"
#include "bevrl/experiment.hpp"
#include "bevrl/hazard.hpp"
#include "bevrl/scenario_io.hpp"
#include "bevrl/vae.hpp"

namespace {

using namespace bevrl;

ScenarioKind parse_scenario(const std::string& s) {
  if (s == "roundabout") return ScenarioKind::kRoundabout;
  if (s == "five_way" || s == "five-way" || s == "fiveway")
    return ScenarioKind::kFiveWay;
  throw CLI::ValidationError("--scenario", "unknown scenario '" + s + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<Record> load_records(const std::string& path) {
  DatasetFile f = DatasetFile::open(path);
  std::vector<Record> recs;
  recs.reserve(f.count());
  for (uint32_t i = 0; i < f.count(); ++i) recs.push_back(f.read_record(i));
  return recs;
}

std::vector<int> parse_ints(const std::string& s, const char* flag) {
  std::vector<int> out;
  for (const auto& item : split_list(s)) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw CLI::ValidationError(flag, "bad integer '" + item + "'");
    }
  }
  return out;
}

int cmd_collect(const std::string& scenario, int frames, int agents,
                double aggressive, uint32_t seed, int size, const std::string& out) {
  CollectConfig cfg;
  cfg.kind = parse_scenario(scenario);
  cfg.n_frames = frames;
  cfg.n_agents = agents;
  cfg.aggressive_fraction = aggressive;
  cfg.seed = seed;
  cfg.spec.height = size;
  cfg.spec.width = size;
  auto records = collect(cfg);
  DatasetHeader header;
  header.height = static_cast<uint16_t>(size);
  header.width = static_cast<uint16_t>(size);
  DatasetFile::write(out, header, records);
  std::cout << "wrote " << records.size() << " records to " << out << "\n";
  write_manifest(std::filesystem::path(out).parent_path().string().empty()
                     ? "."
                     : std::filesystem::path(out).parent_path().string(),
                 {"cmd = collect", "scenario = " + scenario,
                  "frames = " + std::to_string(frames),
                  "agents = " + std::to_string(agents),
                  "seed = " + std::to_string(seed)},
                 {out});
  return 0;
}

int cmd_train_vae(const std::string& data, const std::string& heads,
                  const std::string& weights, double fraction, int epochs, int batch,
                  double lr, int latent, const std::string& channels, uint32_t seed,
                  const std::string& out) {
  DatasetFile file = DatasetFile::open(data);
  auto records = load_records(data);

  VaeConfig cfg;
  cfg.height = file.header().height;
  cfg.width = file.header().width;
  cfg.latent = latent;
  cfg.enc_channels = parse_ints(channels, "--channels");
  cfg.head_rgb = cfg.head_plan = cfg.head_pred = false;
  for (const auto& h : split_list(heads)) {
    if (h == "rec" || h == "rgb")
      cfg.head_rgb = true;
    else if (h == "plan")
      cfg.head_plan = true;
    else if (h == "pred")
      cfg.head_pred = true;
    else
      throw CLI::ValidationError("--heads", "unknown head '" + h + "'");
  }

  TrainVaeOptions opt;
  auto w = split_list(weights);
  if (w.size() != 4)
    throw CLI::ValidationError("--weights", "expected 4 comma-separated values");
  opt.weights = {std::stof(w[0]), std::stof(w[1]), std::stof(w[2]), std::stof(w[3])};
  opt.epochs = epochs;
  opt.batch_size = batch;
  opt.lr = static_cast<float>(lr);
  opt.seed = seed;
  opt.out_dir = out;
  opt.on_epoch = [](int ep, const LossBreakdown& l) {
    std::cout << "epoch " << ep << " total " << l.total << " (rgb " << l.recon_rgb
              << " plan " << l.recon_plan << " pred " << l.recon_pred << " kl "
              << l.kl << ")\n";
  };

  auto split = make_split(file.count(), fraction, seed);
  MultiHeadVae model(cfg, seed);
  train_vae(model, records, split, opt);
  write_manifest(out,
                 {"cmd = train-vae", "data = " + data, "heads = " + heads,
                  "weights = " + weights, "fraction = " + std::to_string(fraction),
                  "epochs = " + std::to_string(epochs),
                  "seed = " + std::to_string(seed)},
                 {data});
  return 0;
}

int cmd_train_dqn(const std::string& vae_path, const std::string& variant_str,
                  const std::string& scenario, int agents, double aggressive,
                  int episodes, int max_steps, int curriculum_max, int size,
                  uint32_t seed, const std::string& out) {
  DqnVariant variant = parse_variant(variant_str);
  MultiHeadVae vae;
  const MultiHeadVae* enc = nullptr;
  TrainDqnOptions opt;
  if (variant != DqnVariant::kCnnE2e) {
    if (vae_path.empty())
      throw CLI::ValidationError("--vae", "variant '" + variant_str +
                                              "' needs an encoder checkpoint");
    vae = MultiHeadVae::load(vae_path);
    enc = &vae;
    opt.env.spec.height = vae.config().height;
    opt.env.spec.width = vae.config().width;
  } else {
    opt.env.spec.height = size;
    opt.env.spec.width = size;
  }
  opt.env.kind = parse_scenario(scenario);
  opt.env.n_agents = agents;
  opt.env.aggressive_fraction = aggressive;
  opt.dqn.episodes = episodes;
  opt.dqn.max_episode_steps = max_steps;
  if (curriculum_max > 0) opt.curriculum = default_curriculum(curriculum_max);
  opt.seed = seed;
  opt.out_dir = out;
  opt.on_episode = [](const EpisodeLog& l) {
    std::cout << "episode " << l.episode << " return " << l.ret << " steps "
              << l.steps << " (" << l.cause << ", " << l.n_agents << " agents)\n";
  };
  train_dqn(enc, variant, opt);
  std::vector<std::string> inputs;
  if (!vae_path.empty()) inputs.push_back(vae_path);
  write_manifest(out,
                 {"cmd = train-dqn", "variant = " + variant_str,
                  "scenario = " + scenario, "agents = " + std::to_string(agents),
                  "episodes = " + std::to_string(episodes),
                  "seed = " + std::to_string(seed)},
                 inputs);
  return 0;
}

int cmd_eval(const std::string& policy_path, const std::string& vae_path,
             const std::string& variant_str, const std::string& scenario, int agents,
             int episodes, int size, uint32_t seed, const std::string& out) {
  DqnVariant variant = parse_variant(variant_str);
  auto policy = load_policy(policy_path);
  MultiHeadVae vae;
  const MultiHeadVae* enc = nullptr;
  EnvConfig env;
  if (variant != DqnVariant::kCnnE2e) {
    vae = MultiHeadVae::load(vae_path);
    enc = &vae;
    env.spec.height = vae.config().height;
    env.spec.width = vae.config().width;
  } else {
    env.spec.height = size;
    env.spec.width = size;
  }
  env.kind = parse_scenario(scenario);
  env.n_agents = agents;
  RewardConfig reward;
  EvalMetrics m = evaluate(policy, enc, variant, env, episodes, reward, seed);
  std::cout << "mean_return " << m.mean_return << "\nsuccess_rate " << m.success_rate
            << "\ncollision_rate " << m.collision_rate << "\nred_light_violations "
            << m.red_light_violations << "\n";
  if (!out.empty()) {
    std::ostringstream csv;
    csv << "episode,return,steps,cause,n_agents\n";
    for (const auto& e : m.episodes)
      csv << e.episode << ',' << e.ret << ',' << e.steps << ',' << e.cause << ','
          << e.n_agents << '\n';
    tc::write_file(out, csv.str());
  }
  return 0;
}

int cmd_ablate(const std::string& config_path) {
  ConfigFile cfg = ConfigFile::load(config_path);
  AblationSpec spec;
  for (const auto& v : split_list(cfg.get("ablation", "variants", "")))
    spec.variants.push_back(parse_variant(v));
  for (const auto& s : split_list(cfg.get("ablation", "seeds", "1,2,3,4,5")))
    spec.seeds.push_back(static_cast<uint32_t>(std::stoul(s)));
  auto ck = cfg.sections().find("checkpoints");
  if (ck != cfg.sections().end()) spec.checkpoints = ck->second;
  spec.train.env.kind = parse_scenario(cfg.get("ablation", "scenario", "roundabout"));
  spec.train.env.n_agents = static_cast<int>(cfg.get_num("ablation", "agents", 10));
  int size = static_cast<int>(cfg.get_num("ablation", "size", 64));
  spec.train.env.spec.height = size;
  spec.train.env.spec.width = size;
  spec.train.dqn.episodes = static_cast<int>(cfg.get_num("ablation", "episodes", 500));
  spec.train.dqn.max_episode_steps =
      static_cast<int>(cfg.get_num("ablation", "max_steps", 400));
  spec.eval_episodes = static_cast<int>(cfg.get_num("ablation", "eval_episodes", 20));
  spec.out_dir = cfg.get("ablation", "out", "runs/ablation");

  AblationResult res = run_ablation(spec);
  for (const auto& [name, v] : res.median_final)
    std::cout << name << " median eval return " << v << "\n";
  std::vector<std::string> inputs{config_path};
  for (const auto& [name, path] : spec.checkpoints) inputs.push_back(path);
  std::vector<std::string> echo{"cmd = ablate", "config = " + config_path};
  write_manifest(spec.out_dir, echo, inputs);
  return 0;
}

int cmd_traverse(const std::string& vae_path, const std::string& data, int frame,
                 int element, int steps, const std::string& out) {
  MultiHeadVae model = MultiHeadVae::load(vae_path);
  auto records = load_records(data);
  if (frame < 0 || frame >= static_cast<int>(records.size()))
    throw CLI::ValidationError("--frame", "index out of range");
  LatentStats stats = latent_stats(model, records);
  std::filesystem::create_directories(out);
  auto emit = [&](int el) {
    RgbImage grid = traverse_latent(model, records[frame].bev, el, steps, stats);
    write_ppm(out + "/traverse_elem" + std::to_string(el) + ".ppm", grid);
  };
  if (element < 0)
    for (int el = 0; el < model.config().latent; ++el) emit(el);
  else
    emit(element);
  write_manifest(out,
                 {"cmd = traverse", "vae = " + vae_path,
                  "frame = " + std::to_string(frame),
                  "element = " + std::to_string(element),
                  "steps = " + std::to_string(steps)},
                 {vae_path, data});
  return 0;
}

int cmd_plot(const std::string& logs, const std::string& out) {
  // Episode CSVs as written by train-dqn; series grouped by variant.
  std::map<std::string, std::vector<std::vector<double>>> by_variant;
  for (const auto& path : split_list(logs)) {
    std::istringstream in(tc::read_file(path));
    std::string line;
    std::getline(in, line);  // header
    std::vector<double> returns;
    std::string variant = "returns";
    while (std::getline(in, line)) {
      auto cols = split_list(line);
      if (cols.size() < 4) continue;
      variant = cols[1];
      returns.push_back(std::stod(cols[3]));
    }
    by_variant[variant].push_back(std::move(returns));
  }
  if (by_variant.empty()) throw CLI::ValidationError("--logs", "no data rows found");
  std::vector<CurveBand> bands;
  for (const auto& [name, runs] : by_variant)
    bands.push_back(aggregate_seeds(name, runs));
  plot_curves(out, "training return", bands);
  std::cout << "wrote " << out << ".svg and " << out << ".csv\n";
  return 0;
}

int cmd_stats(const std::string& data) {
  DatasetFile file = DatasetFile::open(data);
  DatasetStats s = compute_stats(file);
  std::cout << "records " << s.count << "\n";
  std::cout << "size " << file.header().height << "x" << file.header().width << "x"
            << file.header().channels << " dt_ms " << file.header().dt_ms << "\n";
  const char* names[] = {"road",       "lane_lines", "lane_centers", "route",
                         "others_now", "others_hist", "ego_now",      "ego_hist",
                         "light_g",    "light_y",     "light_r"};
  for (int ch = 0; ch < kBevChannels; ++ch)
    std::cout << "fill." << names[ch] << " " << s.fill_rate[ch] << "\n";
  std::cout << "fill.plan " << s.plan_fill << "\nfill.pred " << s.pred_fill
            << "\nmean_speed " << s.mean_speed << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BEV latent-state driving pipeline"};
  app.require_subcommand(1);

  // collect
  std::string scenario = "roundabout", out, data, weights = "1,1,50,50";
  std::string heads = "rec,plan,pred", vae_path, variant = "rec_plan_pred_hzrd";
  std::string policy_path, config_path, channels = "32,64,128,256", logs;
  int frames = 2000, agents = 0, size = 64, epochs = 20, batch = 32, latent = 20;
  int episodes = 500, max_steps = 400, curriculum_max = 0, frame = 0, element = -1;
  int steps = 7, eval_episodes = 20;
  double aggressive = 0.2, fraction = 1.0, lr = 1e-3;
  uint32_t seed = 1;

  auto* collect_cmd = app.add_subcommand("collect", "collect a dataset via autopilot");
  collect_cmd->add_option("--scenario", scenario);
  collect_cmd->add_option("--frames", frames);
  collect_cmd->add_option("--agents", agents);
  collect_cmd->add_option("--aggressive", aggressive);
  collect_cmd->add_option("--seed", seed);
  collect_cmd->add_option("--size", size);
  collect_cmd->add_option("--out", out)->required();

  auto* vae_cmd = app.add_subcommand("train-vae", "train the multi-head VAE");
  vae_cmd->add_option("--data", data)->required();
  vae_cmd->add_option("--heads", heads);
  vae_cmd->add_option("--weights", weights);
  vae_cmd->add_option("--fraction", fraction);
  vae_cmd->add_option("--epochs", epochs);
  vae_cmd->add_option("--batch", batch);
  vae_cmd->add_option("--lr", lr);
  vae_cmd->add_option("--latent", latent);
  vae_cmd->add_option("--channels", channels);
  vae_cmd->add_option("--seed", seed);
  vae_cmd->add_option("--out", out)->required();

  auto* dqn_cmd = app.add_subcommand("train-dqn", "train a DQN policy");
  dqn_cmd->add_option("--vae", vae_path);
  dqn_cmd->add_option("--variant", variant);
  dqn_cmd->add_option("--scenario", scenario);
  dqn_cmd->add_option("--agents", agents);
  dqn_cmd->add_option("--aggressive", aggressive);
  dqn_cmd->add_option("--episodes", episodes);
  dqn_cmd->add_option("--max-steps", max_steps);
  dqn_cmd->add_option("--curriculum", curriculum_max);
  dqn_cmd->add_option("--size", size);
  dqn_cmd->add_option("--seed", seed);
  dqn_cmd->add_option("--out", out)->required();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a trained policy");
  eval_cmd->add_option("--policy", policy_path)->required();
  eval_cmd->add_option("--vae", vae_path);
  eval_cmd->add_option("--variant", variant);
  eval_cmd->add_option("--scenario", scenario);
  eval_cmd->add_option("--agents", agents);
  eval_cmd->add_option("--episodes", eval_episodes);
  eval_cmd->add_option("--size", size);
  eval_cmd->add_option("--seed", seed);
  eval_cmd->add_option("--out", out);

  auto* ablate_cmd = app.add_subcommand("ablate", "run the variant ablation matrix");
  ablate_cmd->add_option("--config", config_path)->required();

  auto* traverse_cmd = app.add_subcommand("traverse", "latent traversal image grids");
  traverse_cmd->add_option("--vae", vae_path)->required();
  traverse_cmd->add_option("--data", data)->required();
  traverse_cmd->add_option("--frame", frame);
  traverse_cmd->add_option("--element", element);
  traverse_cmd->add_option("--steps", steps);
  traverse_cmd->add_option("--out", out)->required();

  auto* plot_cmd = app.add_subcommand("plot", "aggregate episode CSVs into curves");
  plot_cmd->add_option("--logs", logs)->required();
  plot_cmd->add_option("--out", out)->required();

  auto* stats_cmd = app.add_subcommand("stats", "dataset fill-rate summary");
  stats_cmd->add_option("--data", data)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (collect_cmd->parsed())
      return cmd_collect(scenario, frames, agents, aggressive, seed, size, out);
    if (vae_cmd->parsed())
      return cmd_train_vae(data, heads, weights, fraction, epochs, batch, lr, latent,
                           channels, seed, out);
    if (dqn_cmd->parsed())
      return cmd_train_dqn(vae_path, variant, scenario, agents, aggressive, episodes,
                           max_steps, curriculum_max, size, seed, out);
    if (eval_cmd->parsed())
      return cmd_eval(policy_path, vae_path, variant, scenario, agents, eval_episodes,
                      size, seed, out);
    if (ablate_cmd->parsed()) return cmd_ablate(config_path);
    if (traverse_cmd->parsed())
      return cmd_traverse(vae_path, data, frame, element, steps, out);
    if (plot_cmd->parsed()) return cmd_plot(logs, out);
    if (stats_cmd->parsed()) return cmd_stats(data);
  } catch (const CLI::Error& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
