// Criterion 1: autodiff gradients on random conv / transposed-conv /
// linear networks match central finite differences in double precision.

#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "acceptance.hpp"
#include "bevrl/nn.hpp"

using namespace bevrl;
using tc::LayerSpec;

namespace {

// Scalar loss sum(y * y) keeps the objective smooth and exercises every
// output element.
double loss_value(const tc::Network<double>& net, const tc::Tensor<double>& x) {
  auto y = net.forward(x);
  double l = 0;
  for (double v : y.data()) l += v * v;
  return l;
}

struct NetCheck {
  double max_rel_err = 0;
  int64_t n_params = 0;
};

NetCheck check_network(tc::Network<double>& net, std::mt19937& rng) {
  std::vector<int> in_shape = {2};
  in_shape.insert(in_shape.end(), net.input_shape().begin(), net.input_shape().end());
  auto x = tc::Tensor<double>::randn(in_shape, rng);

  // Reverse-mode gradients.
  auto y = net.forward(x);
  auto loss = tc::sum(tc::mul(y, y));
  tc::backward(loss);

  NetCheck out;
  const double h = 1e-5;
  for (auto& p : net.parameters()) {
    out.n_params += p.numel();
    for (int64_t i = 0; i < p.numel(); ++i) {
      double saved = p.data()[i];
      p.data()[i] = saved + h;
      double lp = loss_value(net, x);
      p.data()[i] = saved - h;
      double lm = loss_value(net, x);
      p.data()[i] = saved;
      double fd = (lp - lm) / (2 * h);
      double ad = p.grad()[i];
      double denom = std::max({std::abs(fd), std::abs(ad), 1e-6});
      out.max_rel_err = std::max(out.max_rel_err, std::abs(fd - ad) / denom);
    }
    p.zero_grad();
  }
  return out;
}

}  // namespace

int main() {
  bevrl::accept::Report report;
  auto t0 = std::chrono::steady_clock::now();
  std::mt19937 rng(20260825);

  std::vector<std::pair<std::string, tc::Network<double>>> nets;
  nets.emplace_back("conv+relu+conv+flatten+dense",
                    tc::Network<double>({LayerSpec::conv(3, 4, 3, 1, 1), LayerSpec::relu(),
                                         LayerSpec::conv(4, 2, 3, 2, 1), LayerSpec::flatten(),
                                         LayerSpec::dense(2 * 4 * 4, 5)},
                                        {3, 7, 7}));
  nets.emplace_back("dense+tconv+sigmoid",
                    tc::Network<double>({LayerSpec::dense(6, 2 * 3 * 3),
                                         LayerSpec::to_shape({2, 3, 3}),
                                         LayerSpec::tconv(2, 3, 4, 2, 1), LayerSpec::sigmoid()},
                                        {6}));
  nets.emplace_back("mlp with mixed activations",
                    tc::Network<double>({LayerSpec::dense(9, 12), LayerSpec::relu(),
                                         LayerSpec::dense(12, 8), LayerSpec::sigmoid(),
                                         LayerSpec::dense(8, 4)},
                                        {9}));
  nets.emplace_back("conv into tconv autoencoder",
                    tc::Network<double>({LayerSpec::conv(2, 4, 4, 2, 1), LayerSpec::relu(),
                                         LayerSpec::tconv(4, 2, 4, 2, 1), LayerSpec::sigmoid()},
                                        {2, 8, 8}));
  nets.emplace_back("valid conv then head",
                    tc::Network<double>({LayerSpec::conv(1, 3, 3, 1, 0), LayerSpec::relu(),
                                         LayerSpec::conv(3, 2, 3, 1, 0), LayerSpec::flatten(),
                                         LayerSpec::dense(2 * 2 * 2, 3), LayerSpec::sigmoid()},
                                        {1, 6, 6}));
  nets.emplace_back("strided tconv stack",
                    tc::Network<double>({LayerSpec::dense(4, 3 * 2 * 2),
                                         LayerSpec::to_shape({3, 2, 2}),
                                         LayerSpec::tconv(3, 3, 3, 2, 0), LayerSpec::relu(),
                                         LayerSpec::tconv(3, 1, 3, 1, 1)},
                                        {4}));

  double worst = 0;
  int64_t total_params = 0;
  for (auto& [name, net] : nets) {
    net.set_trainable(true);
    net.init(rng);
    NetCheck c = check_network(net, rng);
    worst = std::max(worst, c.max_rel_err);
    total_params += c.n_params;
    std::ostringstream os;
    os << name << ": " << c.n_params << " params, max rel err " << c.max_rel_err;
    report.note(os.str());
  }

  auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ostringstream os;
  os << nets.size() << " networks, " << total_params << " parameters, max rel err "
     << worst << ", " << elapsed << " s";
  report.line(1, "autodiff gradients match central finite differences (<1e-4, <60 s)",
              worst < 1e-4 && elapsed < 60.0, os.str());
  return report.exit_code();
}
