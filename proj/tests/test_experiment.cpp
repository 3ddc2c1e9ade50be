#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "bevrl/experiment.hpp"
#include "bevrl/scenario_io.hpp"

using namespace bevrl;

TEST_CASE("config files: sections, trimming, comments, errors") {
  std::string text =
      "# comment\n"
      "top = 1\n"
      "[ablation]\n"
      "variants = rec, rec_plan  \n"
      "episodes= 42\n"
      "\n"
      "[env]\n"
      "size = 32\n";
  ConfigFile cfg = ConfigFile::parse(text, "inline");
  CHECK(cfg.get("", "top", "") == "1");
  CHECK(cfg.get("ablation", "variants", "") == "rec, rec_plan");
  CHECK(cfg.get_num("ablation", "episodes", 0) == 42);
  CHECK(cfg.get_num("env", "size", 0) == 32);
  CHECK(cfg.get("env", "missing", "dflt") == "dflt");
  CHECK_FALSE(cfg.has("nope", "x"));
  CHECK_THROWS_WITH_AS(ConfigFile::parse("garbage line\n", "f"),
                       doctest::Contains("f:1"), std::runtime_error);
}

TEST_CASE("smoothing: window 1 is identity, constants unchanged, edges truncate") {
  std::vector<double> xs{1, 2, 3, 4, 5};
  CHECK(smooth(xs, 1) == xs);
  std::vector<double> c(10, 7.0);
  for (double v : smooth(c, 10)) CHECK(v == doctest::Approx(7.0));
  auto s = smooth(xs, 3);
  CHECK(s[0] == doctest::Approx((1 + 2) / 2.0));  // truncated at the left edge
  CHECK(s[2] == doctest::Approx(3.0));
}

TEST_CASE("seed aggregation spans min and max") {
  std::vector<std::vector<double>> runs{{1, 1, 1}, {3, 3, 3}, {2, 2, 2}};
  auto band = aggregate_seeds("x", runs, 1);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(band.mean[i] == doctest::Approx(2.0));
    CHECK(band.lo[i] == doctest::Approx(1.0));
    CHECK(band.hi[i] == doctest::Approx(3.0));
  }
  // Unequal lengths truncate to the shortest.
  auto band2 = aggregate_seeds("y", {{1, 2, 3}, {4, 5}}, 1);
  CHECK(band2.mean.size() == 2);
  CHECK_THROWS_AS(aggregate_seeds("z", {}, 1), std::invalid_argument);
}

TEST_CASE("median") {
  CHECK(median({3, 1, 2}) == doctest::Approx(2.0));
  CHECK(median({4, 1, 2, 3}) == doctest::Approx(2.5));
  CHECK(median({7}) == doctest::Approx(7.0));
  CHECK_THROWS_AS(median({}), std::invalid_argument);
}

TEST_CASE("svg rendering is deterministic bytes") {
  CurveBand a{"alpha", {1, 2, 3}, {0.5, 1.5, 2.5}, {1.5, 2.5, 3.5}};
  CurveBand b{"beta", {3, 2, 1}, {2.5, 1.5, 0.5}, {3.5, 2.5, 1.5}};
  auto s1 = render_curves_svg("t", {a, b});
  auto s2 = render_curves_svg("t", {a, b});
  CHECK(s1 == s2);
  CHECK(s1.find("<svg") == 0);
  CHECK(s1.find("alpha") != std::string::npos);
  CHECK(s1.find("beta") != std::string::npos);
}

TEST_CASE("plot_curves writes svg and csv") {
  CurveBand a{"solo", {1, 2}, {1, 2}, {1, 2}};
  std::string stem = "/tmp/bevrl_test_plot";
  plot_curves(stem, "t", {a});
  std::string svg = tc::read_file(stem + ".svg");
  std::string csv = tc::read_file(stem + ".csv");
  CHECK(svg.find("solo") != std::string::npos);
  CHECK(csv.find("episode,solo_mean,solo_lo,solo_hi") == 0);
  std::remove((stem + ".svg").c_str());
  std::remove((stem + ".csv").c_str());
  CHECK_THROWS_AS(plot_curves(stem, "t", {}), std::invalid_argument);
}

TEST_CASE("git blob hash matches git") {
  // echo 'hello' | git hash-object --stdin
  CHECK(git_blob_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(git_blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  // long input exercises multi-block hashing
  std::string big(100000, 'x');
  CHECK(git_blob_hash(big).size() == 40);
  CHECK(git_blob_hash(big) == git_blob_hash(big));
}

TEST_CASE("manifest lists inputs with their hashes") {
  std::string dir = "/tmp/bevrl_test_manifest";
  std::string input = dir + "/input.bin";
  std::filesystem::create_directories(dir);
  tc::write_file(input, "hello\n");
  write_manifest(dir, {"cmd = test"}, {input});
  std::string m = tc::read_file(dir + "/manifest.txt");
  CHECK(m.find("format.bevd = 1") != std::string::npos);
  CHECK(m.find("cmd = test") != std::string::npos);
  CHECK(m.find("ce013625030ba8dba906f756967f9e9ca394464a") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("shipped scenario files equal the built-in graphs") {
  for (auto [kind, path] :
       {std::pair{ScenarioKind::kRoundabout, "scenarios/roundabout.txt"},
        std::pair{ScenarioKind::kFiveWay, "scenarios/five_way.txt"}}) {
    std::string root = std::filesystem::exists("scenarios") ? "" : "../../";
    std::string text = tc::read_file(root + path);
    CHECK(text == scenario_to_text(make_scenario(kind)));
    LaneGraph parsed = scenario_from_text(text, path);
    CHECK(parsed.lanes.size() == make_scenario(kind).lanes.size());
  }
}

TEST_CASE("ablation requires checkpoints and produces ordered outputs") {
  AblationSpec spec;
  spec.variants = {DqnVariant::kRec};
  spec.seeds = {1};
  CHECK_THROWS_WITH_AS(run_ablation(spec), doctest::Contains("rec"),
                       std::runtime_error);

  // Tiny end-to-end pass: one encoder, two variants, one seed each.
  VaeConfig cfg;
  cfg.height = 16;
  cfg.width = 16;
  cfg.latent = 8;
  cfg.enc_channels = {8, 16};
  MultiHeadVae vae(cfg, 1);
  std::string dir = "/tmp/bevrl_test_ablate";
  std::filesystem::create_directories(dir);
  std::string ckpt = dir + "/vae.bltm";
  vae.save(ckpt);

  spec.variants = {DqnVariant::kRec, DqnVariant::kRecPlanPredHzrd};
  spec.checkpoints = {{"rec", ckpt}, {"rec_plan_pred_hzrd", ckpt}};
  spec.train.env.n_agents = 0;
  spec.train.env.spec.height = 16;
  spec.train.env.spec.width = 16;
  spec.train.env.max_steps = 15;
  spec.train.dqn.episodes = 2;
  spec.train.dqn.max_episode_steps = 15;
  spec.train.dqn.learn_start = 10;
  spec.train.dqn.batch_size = 4;
  spec.train.dqn.hidden = {8};
  spec.eval_episodes = 1;
  spec.out_dir = dir + "/out";
  auto res = run_ablation(spec);
  CHECK(res.rows.size() == 2);
  CHECK(res.median_final.count("rec") == 1);
  CHECK(res.curves.at("rec").size() == 1);
  CHECK(std::filesystem::exists(spec.out_dir + "/summary.csv"));
  CHECK(std::filesystem::exists(spec.out_dir + "/curves.svg"));
  CHECK(std::filesystem::exists(spec.out_dir + "/rec_seed1/episodes.csv"));
  std::filesystem::remove_all(dir);
}
