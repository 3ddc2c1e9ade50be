#include "bevrl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "bevrl/nn.hpp"

namespace bevrl {

// --- config files -----------------------------------------------------------

ConfigFile ConfigFile::parse(const std::string& text, const std::string& origin) {
  ConfigFile cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  auto trim = [](std::string s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return std::string();
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                               ": expected 'key = value', got '" + t + "'");
    cfg.sections_[section][trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::string& path) {
  return parse(tc::read_file(path), path);
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  auto s = sections_.find(section);
  return s != sections_.end() && s->second.count(key) > 0;
}

std::string ConfigFile::get(const std::string& section, const std::string& key,
                            const std::string& fallback) const {
  auto s = sections_.find(section);
  if (s == sections_.end()) return fallback;
  auto k = s->second.find(key);
  return k == s->second.end() ? fallback : k->second;
}

double ConfigFile::get_num(const std::string& section, const std::string& key,
                           double fallback) const {
  if (!has(section, key)) return fallback;
  return std::stod(get(section, key, ""));
}

// --- curves -----------------------------------------------------------------

std::vector<double> smooth(const std::vector<double>& xs, int window) {
  if (window <= 1 || xs.empty()) return xs;
  std::vector<double> out(xs.size());
  int half = window / 2;
  for (int i = 0; i < static_cast<int>(xs.size()); ++i) {
    int lo = std::max(0, i - half);
    int hi = std::min(static_cast<int>(xs.size()) - 1, i + window - half - 1);
    double acc = 0;
    for (int j = lo; j <= hi; ++j) acc += xs[j];
    out[i] = acc / (hi - lo + 1);
  }
  return out;
}

CurveBand aggregate_seeds(const std::string& name,
                          const std::vector<std::vector<double>>& runs, int window) {
  if (runs.empty()) throw std::invalid_argument("aggregate_seeds: no runs");
  size_t n = runs[0].size();
  for (const auto& r : runs) n = std::min(n, r.size());
  CurveBand band;
  band.name = name;
  std::vector<std::vector<double>> smoothed;
  for (const auto& r : runs)
    smoothed.push_back(smooth(std::vector<double>(r.begin(), r.begin() + n), window));
  band.mean.resize(n);
  band.lo.resize(n);
  band.hi.resize(n);
  for (size_t i = 0; i < n; ++i) {
    double acc = 0, lo = smoothed[0][i], hi = smoothed[0][i];
    for (const auto& r : smoothed) {
      acc += r[i];
      lo = std::min(lo, r[i]);
      hi = std::max(hi, r[i]);
    }
    band.mean[i] = acc / smoothed.size();
    band.lo[i] = lo;
    band.hi[i] = hi;
  }
  return band;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

}  // namespace

std::string render_curves_svg(const std::string& title,
                              const std::vector<CurveBand>& curves) {
  const int W = 720, H = 440, ml = 60, mr = 160, mt = 40, mb = 40;
  double ymin = 1e300, ymax = -1e300;
  size_t n = 0;
  for (const auto& c : curves) {
    n = std::max(n, c.mean.size());
    for (size_t i = 0; i < c.mean.size(); ++i) {
      ymin = std::min(ymin, c.lo[i]);
      ymax = std::max(ymax, c.hi[i]);
    }
  }
  if (n == 0) {
    ymin = 0;
    ymax = 1;
    n = 1;
  }
  if (ymax - ymin < 1e-9) ymax = ymin + 1;
  auto px = [&](double ep) {
    return ml + (W - ml - mr) * (n > 1 ? ep / (n - 1) : 0.5);
  };
  auto py = [&](double v) {
    return H - mb - (H - mt - mb) * (v - ymin) / (ymax - ymin);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\""
      << H << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  svg << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"16\">" << title << "</text>\n";
  // axes
  svg << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr
      << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
      << H - mb << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    double v = ymin + (ymax - ymin) * k / 4;
    svg << "<text x=\"" << ml - 6 << "\" y=\"" << fmt(py(v) + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << fmt(v) << "</text>\n";
  }
  svg << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 8
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\">episode</text>\n";

  for (size_t ci = 0; ci < curves.size(); ++ci) {
    const auto& c = curves[ci];
    const char* color = kPalette[ci % 8];
    if (c.mean.empty()) continue;
    // min/max band
    svg << "<polygon fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" "
        << "points=\"";
    for (size_t i = 0; i < c.mean.size(); ++i)
      svg << fmt(px(static_cast<double>(i))) << ',' << fmt(py(c.hi[i])) << ' ';
    for (size_t i = c.mean.size(); i-- > 0;)
      svg << fmt(px(static_cast<double>(i))) << ',' << fmt(py(c.lo[i])) << ' ';
    svg << "\"/>\n";
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" "
        << "points=\"";
    for (size_t i = 0; i < c.mean.size(); ++i)
      svg << fmt(px(static_cast<double>(i))) << ',' << fmt(py(c.mean[i])) << ' ';
    svg << "\"/>\n";
    int ly = mt + 18 * static_cast<int>(ci);
    svg << "<rect x=\"" << W - mr + 10 << "\" y=\"" << ly << "\" width=\"12\" "
        << "height=\"12\" fill=\"" << color << "\"/>\n";
    svg << "<text x=\"" << W - mr + 28 << "\" y=\"" << ly + 10
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << c.name << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void plot_curves(const std::string& stem, const std::string& title,
                 const std::vector<CurveBand>& curves) {
  if (curves.empty()) throw std::invalid_argument("plot_curves: no curves");
  tc::write_file(stem + ".svg", render_curves_svg(title, curves));
  std::ostringstream csv;
  csv << "episode";
  for (const auto& c : curves)
    csv << ',' << c.name << "_mean," << c.name << "_lo," << c.name << "_hi";
  csv << '\n';
  size_t n = 0;
  for (const auto& c : curves) n = std::max(n, c.mean.size());
  for (size_t i = 0; i < n; ++i) {
    csv << i;
    for (const auto& c : curves) {
      if (i < c.mean.size())
        csv << ',' << c.mean[i] << ',' << c.lo[i] << ',' << c.hi[i];
      else
        csv << ",,,";
    }
    csv << '\n';
  }
  tc::write_file(stem + ".csv", csv.str());
}

// --- manifests --------------------------------------------------------------

namespace {

// Compact SHA-1 (FIPS 180-1), enough for content addressing.
struct Sha1 {
  uint32_t h[5] = {0x67452301u, 0xEFCDAB89u, 0x98BADCFEu, 0x10325476u, 0xC3D2E1F0u};
  std::string buf;
  uint64_t total = 0;

  static uint32_t rol(uint32_t v, int s) { return (v << s) | (v >> (32 - s)); }

  void block(const uint8_t* p) {
    uint32_t w[80];
    for (int i = 0; i < 16; ++i)
      w[i] = (p[4 * i] << 24) | (p[4 * i + 1] << 16) | (p[4 * i + 2] << 8) |
             p[4 * i + 3];
    for (int i = 16; i < 80; ++i)
      w[i] = rol(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);
    uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4];
    for (int i = 0; i < 80; ++i) {
      uint32_t f, k;
      if (i < 20) {
        f = (b & c) | (~b & d);
        k = 0x5A827999u;
      } else if (i < 40) {
        f = b ^ c ^ d;
        k = 0x6ED9EBA1u;
      } else if (i < 60) {
        f = (b & c) | (b & d) | (c & d);
        k = 0x8F1BBCDCu;
      } else {
        f = b ^ c ^ d;
        k = 0xCA62C1D6u;
      }
      uint32_t t = rol(a, 5) + f + e + k + w[i];
      e = d;
      d = c;
      c = rol(b, 30);
      b = a;
      a = t;
    }
    h[0] += a;
    h[1] += b;
    h[2] += c;
    h[3] += d;
    h[4] += e;
  }

  void update(const std::string& s) {
    total += s.size();
    buf += s;
    size_t off = 0;
    while (buf.size() - off >= 64) {
      block(reinterpret_cast<const uint8_t*>(buf.data()) + off);
      off += 64;
    }
    buf.erase(0, off);
  }

  std::string hex() {
    uint64_t bits = total * 8;
    std::string pad = "\x80";
    while ((total + pad.size()) % 64 != 56) pad += '\0';
    for (int i = 7; i >= 0; --i) pad += static_cast<char>((bits >> (8 * i)) & 0xff);
    update(pad);
    total -= pad.size();  // keep the object reusable-safe
    char out[41];
    for (int i = 0; i < 5; ++i) std::snprintf(out + 8 * i, 9, "%08x", h[i]);
    return std::string(out, 40);
  }
};

}  // namespace

std::string git_blob_hash(const std::string& content) {
  Sha1 s;
  s.update("blob " + std::to_string(content.size()) + std::string(1, '\0'));
  s.update(content);
  return s.hex();
}

void write_manifest(const std::string& out_dir,
                    const std::vector<std::string>& config_lines,
                    const std::vector<std::string>& input_files) {
  std::filesystem::create_directories(out_dir);
  std::ostringstream out;
  out << "# run manifest\n";
  out << "format.bevd = 1\n";
  out << "format.bltm = 1\n";
  for (const auto& l : config_lines) out << l << '\n';
  for (const auto& f : input_files)
    out << "input " << git_blob_hash(tc::read_file(f)) << ' ' << f << '\n';
  tc::write_file(out_dir + "/manifest.txt", out.str());
}

// --- ablation ---------------------------------------------------------------

double median(std::vector<double> xs) {
  if (xs.empty()) throw std::invalid_argument("median: empty");
  std::sort(xs.begin(), xs.end());
  size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

AblationResult run_ablation(const AblationSpec& spec) {
  if (spec.variants.empty() || spec.seeds.empty())
    throw std::invalid_argument("run_ablation: empty variant or seed list");
  AblationResult result;
  std::map<std::string, MultiHeadVae> encoders;
  for (auto v : spec.variants) {
    if (v == DqnVariant::kCnnE2e) continue;
    std::string name = variant_name(v);
    auto it = spec.checkpoints.find(name);
    if (it == spec.checkpoints.end())
      throw std::runtime_error("run_ablation: no VAE checkpoint for variant '" +
                               name + "'");
    encoders.emplace(name, MultiHeadVae::load(it->second));
  }

  for (auto v : spec.variants) {
    std::string name = variant_name(v);
    const MultiHeadVae* enc =
        v == DqnVariant::kCnnE2e ? nullptr : &encoders.at(name);
    std::vector<std::vector<double>> curves;
    std::vector<double> finals;
    for (uint32_t seed : spec.seeds) {
      TrainDqnOptions opt = spec.train;
      opt.seed = seed;
      if (!spec.out_dir.empty())
        opt.out_dir = spec.out_dir + "/" + name + "_seed" + std::to_string(seed);
      TrainDqnResult train = train_dqn(enc, v, opt);

      std::vector<double> returns;
      for (const auto& ep : train.episodes) returns.push_back(ep.ret);
      int tail = std::min<int>(10, static_cast<int>(returns.size()));
      double final_ret = 0;
      for (int i = 0; i < tail; ++i) final_ret += returns[returns.size() - 1 - i];
      final_ret /= std::max(1, tail);

      EvalMetrics eval = evaluate(train.policy, enc, v, opt.env, spec.eval_episodes,
                                  opt.reward, seed + 1000);
      AblationRow row;
      row.variant = name;
      row.seed = seed;
      row.final_return = final_ret;
      row.eval_return = eval.mean_return;
      row.success_rate = eval.success_rate;
      result.rows.push_back(row);
      curves.push_back(std::move(returns));
      finals.push_back(eval.mean_return);
    }
    result.curves[name] = curves;
    result.median_final[name] = median(finals);
  }

  if (!spec.out_dir.empty()) {
    std::filesystem::create_directories(spec.out_dir);
    std::ostringstream sum;
    sum << "variant,seed,final_return,eval_return,success_rate\n";
    for (const auto& r : result.rows)
      sum << r.variant << ',' << r.seed << ',' << r.final_return << ','
          << r.eval_return << ',' << r.success_rate << '\n';
    sum << "\nvariant,median_eval_return\n";
    for (const auto& [name, v] : result.median_final) sum << name << ',' << v << '\n';
    tc::write_file(spec.out_dir + "/summary.csv", sum.str());

    std::vector<CurveBand> bands;
    for (const auto& [name, runs] : result.curves)
      bands.push_back(aggregate_seeds(name, runs));
    plot_curves(spec.out_dir + "/curves", "training return", bands);
  }
  return result;
}

}  // namespace bevrl
