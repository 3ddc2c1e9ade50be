#pragma once

// Experiment orchestration: the ablation protocol (variants x seeds x
// dataset fractions), curve aggregation and SVG plotting, flat-text
// config files and run manifests.

#include <map>
#include <string>
#include <vector>

#include "bevrl/dqn.hpp"

namespace bevrl {

// --- flat "key = value" config files with [section] headers -----------------

class ConfigFile {
 public:
  static ConfigFile parse(const std::string& text, const std::string& origin);
  static ConfigFile load(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback) const;
  double get_num(const std::string& section, const std::string& key,
                 double fallback) const;
  const std::map<std::string, std::map<std::string, std::string>>& sections() const {
    return sections_;
  }

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

// --- curve aggregation and plotting ----------------------------------------

struct CurveBand {
  std::string name;
  std::vector<double> mean, lo, hi;  // per episode, smoothed
};

// Moving average, window centered where possible, truncated at edges.
std::vector<double> smooth(const std::vector<double>& xs, int window);

// Mean with min/max band across seeds; series may have unequal length
// (truncated to the shortest).
CurveBand aggregate_seeds(const std::string& name,
                          const std::vector<std::vector<double>>& runs, int window = 10);

// Deterministic SVG line chart; one band per curve.
std::string render_curves_svg(const std::string& title,
                              const std::vector<CurveBand>& curves);

// Writes <stem>.svg and <stem>.csv (episode, then per-curve mean/lo/hi).
void plot_curves(const std::string& stem, const std::string& title,
                 const std::vector<CurveBand>& curves);

// --- manifests --------------------------------------------------------------

// Git-style blob hash ("blob <len>\0" + content, SHA-1, hex).
std::string git_blob_hash(const std::string& content);

// manifest.txt: config echo lines, format versions, per-input blob hash.
void write_manifest(const std::string& out_dir,
                    const std::vector<std::string>& config_lines,
                    const std::vector<std::string>& input_files);

// --- ablation protocol ------------------------------------------------------

struct AblationSpec {
  std::vector<DqnVariant> variants;
  std::vector<uint32_t> seeds;
  // Variant name -> VAE checkpoint (cnn_e2e needs none).
  std::map<std::string, std::string> checkpoints;
  TrainDqnOptions train;  // out_dir/seed overridden per run
  int eval_episodes = 20;
  std::string out_dir;
};

struct AblationRow {
  std::string variant;
  uint32_t seed = 0;
  double final_return = 0;  // median eval-return proxy: mean of final 10 episodes
  double eval_return = 0;
  double success_rate = 0;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  // Variant -> median across seeds of eval_return.
  std::map<std::string, double> median_final;
  // Variant -> per-seed training return curves.
  std::map<std::string, std::vector<std::vector<double>>> curves;
};

double median(std::vector<double> xs);

AblationResult run_ablation(const AblationSpec& spec);

}  // namespace bevrl
