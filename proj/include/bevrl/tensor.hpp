#pragma once

// Dense-tensor substrate with reverse-mode automatic differentiation.
// Templated on the scalar type: float for training, double for the
// finite-difference verification suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace bevrl::tc {

inline int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <class T>
struct Node {
  std::vector<int> shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backprop;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->shape = std::move(shape);
    node_->data.assign(shape_numel(node_->shape), T(0));
    node_->requires_grad = requires_grad;
  }

  static Tensor from_data(std::vector<int> shape, std::vector<T> values,
                          bool requires_grad = false) {
    Tensor t(shape, requires_grad);
    if (static_cast<int64_t>(values.size()) != t.numel())
      throw std::invalid_argument("from_data: value count does not match shape " +
                                  shape_str(shape));
    t.node_->data = std::move(values);
    return t;
  }

  static Tensor scalar(T v) { return from_data({1}, {v}); }

  template <class Rng>
  static Tensor randn(std::vector<int> shape, Rng& rng, T stddev = T(1),
                      bool requires_grad = false) {
    Tensor t(shape, requires_grad);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (auto& v : t.node_->data) v = static_cast<T>(dist(rng)) * stddev;
    return t;
  }

  template <class Rng>
  static Tensor uniform(std::vector<int> shape, Rng& rng, T lo, T hi,
                        bool requires_grad = false) {
    Tensor t(shape, requires_grad);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& v : t.node_->data) v = static_cast<T>(dist(rng));
    return t;
  }

  bool valid() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int64_t numel() const { return static_cast<int64_t>(node_->data.size()); }
  std::vector<T>& data() { return node_->data; }
  const std::vector<T>& data() const { return node_->data; }
  std::vector<T>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }
  void zero_grad() {
    node_->grad.assign(node_->data.size(), T(0));
  }
  std::shared_ptr<Node<T>> node() const { return node_; }

  T item() const {
    if (numel() != 1) throw std::invalid_argument("item: tensor is not scalar");
    return node_->data[0];
  }

  // Value copy detached from the graph.
  Tensor detach() const {
    Tensor t;
    t.node_ = std::make_shared<Node<T>>();
    t.node_->shape = node_->shape;
    t.node_->data = node_->data;
    return t;
  }

  bool all_finite() const {
    for (T v : node_->data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  static Tensor wrap(std::shared_ptr<Node<T>> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <class T>
std::shared_ptr<Node<T>> make_result(std::vector<int> shape,
                                     std::vector<std::shared_ptr<Node<T>>> parents) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->data.assign(shape_numel(n->shape), T(0));
  for (const auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  n->parents = std::move(parents);
  return n;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// backward: reverse-topological traversal from a scalar loss.
// ---------------------------------------------------------------------------
template <class T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(loss.shape()));
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  // Iterative post-order DFS.
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.push_back({loss.node().get(), 0});
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node<T>* p = n->parents[idx].get();
      ++idx;
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backprop) {
      for (auto& p : n->parents)
        if (p->requires_grad) p->ensure_grad();
      n->backprop(*n);
    }
  }
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------
template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  auto n = detail::make_result<T>(x.shape(), {x.node()});
  const auto& xd = x.data();
  for (size_t i = 0; i < xd.size(); ++i) n->data[i] = xd[i] > T(0) ? xd[i] : T(0);
  if (n->requires_grad)
    n->backprop = [](Node<T>& self) {
      Node<T>* p = self.parents[0].get();
      for (size_t i = 0; i < self.data.size(); ++i)
        if (p->data[i] > T(0)) p->grad[i] += self.grad[i];
    };
  return Tensor<T>::wrap(n);
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  auto n = detail::make_result<T>(x.shape(), {x.node()});
  const auto& xd = x.data();
  for (size_t i = 0; i < xd.size(); ++i)
    n->data[i] = T(1) / (T(1) + std::exp(-xd[i]));
  if (n->requires_grad)
    n->backprop = [](Node<T>& self) {
      Node<T>* p = self.parents[0].get();
      for (size_t i = 0; i < self.data.size(); ++i) {
        T s = self.data[i];
        p->grad[i] += self.grad[i] * s * (T(1) - s);
      }
    };
  return Tensor<T>::wrap(n);
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  auto n = detail::make_result<T>(a.shape(), {a.node(), b.node()});
  for (size_t i = 0; i < n->data.size(); ++i) n->data[i] = a.data()[i] + b.data()[i];
  if (n->requires_grad)
    n->backprop = [](Node<T>& self) {
      for (int k = 0; k < 2; ++k) {
        Node<T>* p = self.parents[k].get();
        if (!p->requires_grad) continue;
        for (size_t i = 0; i < self.data.size(); ++i) p->grad[i] += self.grad[i];
      }
    };
  return Tensor<T>::wrap(n);
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T k) {
  auto n = detail::make_result<T>(a.shape(), {a.node()});
  for (size_t i = 0; i < n->data.size(); ++i) n->data[i] = a.data()[i] * k;
  if (n->requires_grad)
    n->backprop = [k](Node<T>& self) {
      Node<T>* p = self.parents[0].get();
      for (size_t i = 0; i < self.data.size(); ++i) p->grad[i] += self.grad[i] * k;
    };
  return Tensor<T>::wrap(n);
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("mul: shape mismatch");
  auto n = detail::make_result<T>(a.shape(), {a.node(), b.node()});
  for (size_t i = 0; i < n->data.size(); ++i) n->data[i] = a.data()[i] * b.data()[i];
  if (n->requires_grad)
    n->backprop = [](Node<T>& self) {
      Node<T>* pa = self.parents[0].get();
      Node<T>* pb = self.parents[1].get();
      for (size_t i = 0; i < self.data.size(); ++i) {
        if (pa->requires_grad) pa->grad[i] += self.grad[i] * pb->data[i];
        if (pb->requires_grad) pb->grad[i] += self.grad[i] * pa->data[i];
      }
    };
  return Tensor<T>::wrap(n);
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  auto n = detail::make_result<T>({1}, {x.node()});
  T acc = T(0);
  for (T v : x.data()) acc += v;
  n->data[0] = acc;
  if (n->requires_grad)
    n->backprop = [](Node<T>& self) {
      Node<T>* p = self.parents[0].get();
      for (size_t i = 0; i < p->data.size(); ++i) p->grad[i] += self.grad[0];
    };
  return Tensor<T>::wrap(n);
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  int64_t count = x.numel();
  return scale(sum(x), T(1) / static_cast<T>(count));
}

// ---------------------------------------------------------------------------
// Shape ops (copying views)
// ---------------------------------------------------------------------------
template <class T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<int> shape) {
  if (shape_numel(shape) != x.numel())
    throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) +
                                " as " + shape_str(shape));
  auto n = detail::make_result<T>(shape, {x.node()});
  n->data = x.data();
  if (n->requires_grad)
    n->backprop = [](Node<T>& self) {
      Node<T>* p = self.parents[0].get();
      for (size_t i = 0; i < self.data.size(); ++i) p->grad[i] += self.grad[i];
    };
  return Tensor<T>::wrap(n);
}

// Flattens all dims after the leading (batch) dim.
template <class T>
Tensor<T> flatten(const Tensor<T>& x) {
  int batch = x.shape().empty() ? 1 : x.shape()[0];
  int rest = static_cast<int>(x.numel() / batch);
  return reshape(x, {batch, rest});
}

// ---------------------------------------------------------------------------
// linear: x [B,in] @ W [out,in]^T + b [out] -> [B,out]
// ---------------------------------------------------------------------------
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.shape().size() != 2 || w.shape().size() != 2 || b.shape().size() != 1)
    throw std::invalid_argument("linear: expected x[B,in], w[out,in], b[out]");
  int batch = x.shape()[0], in = x.shape()[1];
  int out = w.shape()[0];
  if (w.shape()[1] != in || b.shape()[0] != out)
    throw std::invalid_argument("linear: shape mismatch x" + shape_str(x.shape()) +
                                " w" + shape_str(w.shape()));
  auto n = detail::make_result<T>({batch, out}, {x.node(), w.node(), b.node()});
  const T* xd = x.data().data();
  const T* wd = w.data().data();
  const T* bd = b.data().data();
  T* od = n->data.data();
  for (int bi = 0; bi < batch; ++bi)
    for (int o = 0; o < out; ++o) {
      T acc = bd[o];
      const T* xr = xd + static_cast<int64_t>(bi) * in;
      const T* wr = wd + static_cast<int64_t>(o) * in;
      for (int i = 0; i < in; ++i) acc += xr[i] * wr[i];
      od[static_cast<int64_t>(bi) * out + o] = acc;
    }
  if (n->requires_grad)
    n->backprop = [batch, in, out](Node<T>& self) {
      Node<T>* px = self.parents[0].get();
      Node<T>* pw = self.parents[1].get();
      Node<T>* pb = self.parents[2].get();
      const T* g = self.grad.data();
      for (int bi = 0; bi < batch; ++bi) {
        const T* gr = g + static_cast<int64_t>(bi) * out;
        for (int o = 0; o < out; ++o) {
          T go = gr[o];
          if (go == T(0)) continue;
          if (pb->requires_grad) pb->grad[o] += go;
          const T* wr = pw->data.data() + static_cast<int64_t>(o) * in;
          const T* xr = px->data.data() + static_cast<int64_t>(bi) * in;
          if (px->requires_grad) {
            T* gxr = px->grad.data() + static_cast<int64_t>(bi) * in;
            for (int i = 0; i < in; ++i) gxr[i] += go * wr[i];
          }
          if (pw->requires_grad) {
            T* gwr = pw->grad.data() + static_cast<int64_t>(o) * in;
            for (int i = 0; i < in; ++i) gwr[i] += go * xr[i];
          }
        }
      }
    };
  return Tensor<T>::wrap(n);
}

// ---------------------------------------------------------------------------
// conv2d: x [B,Ci,H,W], w [Co,Ci,K,K], b [Co] -> [B,Co,Ho,Wo]
// Ho = (H + 2p - K)/s + 1 (floor)
// ---------------------------------------------------------------------------
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 int stride, int pad) {
  if (x.shape().size() != 4 || w.shape().size() != 4)
    throw std::invalid_argument("conv2d: expected x[B,C,H,W], w[Co,Ci,K,K]");
  int B = x.shape()[0], Ci = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  int Co = w.shape()[0], K = w.shape()[2];
  if (w.shape()[1] != Ci || w.shape()[3] != K || b.shape()[0] != Co)
    throw std::invalid_argument("conv2d: shape mismatch x" + shape_str(x.shape()) +
                                " w" + shape_str(w.shape()));
  int Ho = (H + 2 * pad - K) / stride + 1;
  int Wo = (W + 2 * pad - K) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: non-positive output size");
  auto n = detail::make_result<T>({B, Co, Ho, Wo}, {x.node(), w.node(), b.node()});
  const T* xd = x.data().data();
  const T* wd = w.data().data();
  const T* bd = b.data().data();
  T* od = n->data.data();
  auto xi = [=](int bi, int c, int h, int ww_) {
    return ((static_cast<int64_t>(bi) * Ci + c) * H + h) * W + ww_;
  };
  auto oi = [=](int bi, int c, int h, int ww_) {
    return ((static_cast<int64_t>(bi) * Co + c) * Ho + h) * Wo + ww_;
  };
  auto wi = [=](int co, int ci, int kh, int kw) {
    return ((static_cast<int64_t>(co) * Ci + ci) * K + kh) * K + kw;
  };
  for (int bi = 0; bi < B; ++bi)
    for (int co = 0; co < Co; ++co) {
      T* orow = od + oi(bi, co, 0, 0);
      for (int64_t i = 0; i < static_cast<int64_t>(Ho) * Wo; ++i) orow[i] = bd[co];
      for (int ci = 0; ci < Ci; ++ci)
        for (int kh = 0; kh < K; ++kh)
          for (int kw = 0; kw < K; ++kw) {
            T wv = wd[wi(co, ci, kh, kw)];
            if (wv == T(0)) continue;
            for (int oh = 0; oh < Ho; ++oh) {
              int ih = oh * stride - pad + kh;
              if (ih < 0 || ih >= H) continue;
              for (int ow = 0; ow < Wo; ++ow) {
                int iw = ow * stride - pad + kw;
                if (iw < 0 || iw >= W) continue;
                orow[static_cast<int64_t>(oh) * Wo + ow] += wv * xd[xi(bi, ci, ih, iw)];
              }
            }
          }
    }
  if (n->requires_grad)
    n->backprop = [=](Node<T>& self) {
      Node<T>* px = self.parents[0].get();
      Node<T>* pw = self.parents[1].get();
      Node<T>* pb = self.parents[2].get();
      const T* g = self.grad.data();
      for (int bi = 0; bi < B; ++bi)
        for (int co = 0; co < Co; ++co) {
          const T* grow = g + oi(bi, co, 0, 0);
          if (pb->requires_grad) {
            T acc = T(0);
            for (int64_t i = 0; i < static_cast<int64_t>(Ho) * Wo; ++i) acc += grow[i];
            pb->grad[co] += acc;
          }
          for (int ci = 0; ci < Ci; ++ci)
            for (int kh = 0; kh < K; ++kh)
              for (int kw = 0; kw < K; ++kw) {
                T wv = pw->data[wi(co, ci, kh, kw)];
                T dw = T(0);
                for (int oh = 0; oh < Ho; ++oh) {
                  int ih = oh * stride - pad + kh;
                  if (ih < 0 || ih >= H) continue;
                  for (int ow = 0; ow < Wo; ++ow) {
                    int iw = ow * stride - pad + kw;
                    if (iw < 0 || iw >= W) continue;
                    T go = grow[static_cast<int64_t>(oh) * Wo + ow];
                    dw += go * px->data[xi(bi, ci, ih, iw)];
                    if (px->requires_grad) px->grad[xi(bi, ci, ih, iw)] += go * wv;
                  }
                }
                if (pw->requires_grad) pw->grad[wi(co, ci, kh, kw)] += dw;
              }
        }
    };
  return Tensor<T>::wrap(n);
}

// ---------------------------------------------------------------------------
// conv_transpose2d: x [B,Ci,H,W], w [Ci,Co,K,K], b [Co]
// Ho = (H-1)*s - 2p + K
// Forward is the gradient-to-input of the matching conv2d.
// ---------------------------------------------------------------------------
template <class T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                           int stride, int pad) {
  if (x.shape().size() != 4 || w.shape().size() != 4)
    throw std::invalid_argument("conv_transpose2d: expected x[B,C,H,W], w[Ci,Co,K,K]");
  int B = x.shape()[0], Ci = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  int Co = w.shape()[1], K = w.shape()[2];
  if (w.shape()[0] != Ci || w.shape()[3] != K || b.shape()[0] != Co)
    throw std::invalid_argument("conv_transpose2d: shape mismatch x" +
                                shape_str(x.shape()) + " w" + shape_str(w.shape()));
  int Ho = (H - 1) * stride - 2 * pad + K;
  int Wo = (W - 1) * stride - 2 * pad + K;
  if (Ho <= 0 || Wo <= 0)
    throw std::invalid_argument("conv_transpose2d: non-positive output size");
  auto n = detail::make_result<T>({B, Co, Ho, Wo}, {x.node(), w.node(), b.node()});
  const T* xd = x.data().data();
  const T* wd = w.data().data();
  const T* bd = b.data().data();
  T* od = n->data.data();
  auto xi = [=](int bi, int c, int h, int ww_) {
    return ((static_cast<int64_t>(bi) * Ci + c) * H + h) * W + ww_;
  };
  auto oi = [=](int bi, int c, int h, int ww_) {
    return ((static_cast<int64_t>(bi) * Co + c) * Ho + h) * Wo + ww_;
  };
  auto wi = [=](int ci, int co, int kh, int kw) {
    return ((static_cast<int64_t>(ci) * Co + co) * K + kh) * K + kw;
  };
  for (int bi = 0; bi < B; ++bi)
    for (int co = 0; co < Co; ++co) {
      T* orow = od + oi(bi, co, 0, 0);
      for (int64_t i = 0; i < static_cast<int64_t>(Ho) * Wo; ++i) orow[i] = bd[co];
    }
  for (int bi = 0; bi < B; ++bi)
    for (int ci = 0; ci < Ci; ++ci)
      for (int co = 0; co < Co; ++co)
        for (int kh = 0; kh < K; ++kh)
          for (int kw = 0; kw < K; ++kw) {
            T wv = wd[wi(ci, co, kh, kw)];
            if (wv == T(0)) continue;
            for (int h = 0; h < H; ++h) {
              int oh = h * stride - pad + kh;
              if (oh < 0 || oh >= Ho) continue;
              for (int ww_ = 0; ww_ < W; ++ww_) {
                int ow = ww_ * stride - pad + kw;
                if (ow < 0 || ow >= Wo) continue;
                od[oi(bi, co, oh, ow)] += wv * xd[xi(bi, ci, h, ww_)];
              }
            }
          }
  if (n->requires_grad)
    n->backprop = [=](Node<T>& self) {
      Node<T>* px = self.parents[0].get();
      Node<T>* pw = self.parents[1].get();
      Node<T>* pb = self.parents[2].get();
      const T* g = self.grad.data();
      if (pb->requires_grad)
        for (int bi = 0; bi < B; ++bi)
          for (int co = 0; co < Co; ++co) {
            const T* grow = g + oi(bi, co, 0, 0);
            T acc = T(0);
            for (int64_t i = 0; i < static_cast<int64_t>(Ho) * Wo; ++i) acc += grow[i];
            pb->grad[co] += acc;
          }
      for (int bi = 0; bi < B; ++bi)
        for (int ci = 0; ci < Ci; ++ci)
          for (int co = 0; co < Co; ++co)
            for (int kh = 0; kh < K; ++kh)
              for (int kw = 0; kw < K; ++kw) {
                T wv = pw->data[wi(ci, co, kh, kw)];
                T dw = T(0);
                for (int h = 0; h < H; ++h) {
                  int oh = h * stride - pad + kh;
                  if (oh < 0 || oh >= Ho) continue;
                  for (int ww_ = 0; ww_ < W; ++ww_) {
                    int ow = ww_ * stride - pad + kw;
                    if (ow < 0 || ow >= Wo) continue;
                    T go = g[oi(bi, co, oh, ow)];
                    dw += go * px->data[xi(bi, ci, h, ww_)];
                    if (px->requires_grad) px->grad[xi(bi, ci, h, ww_)] += go * wv;
                  }
                }
                if (pw->requires_grad) pw->grad[wi(ci, co, kh, kw)] += dw;
              }
    };
  return Tensor<T>::wrap(n);
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------
enum class Reduction { kMean, kSum };

inline constexpr double kProbClamp = 1e-6;

// Bernoulli negative log-likelihood on probabilities in [0,1]. Inputs are
// clamped to [eps, 1-eps] before the log.
template <class T>
Tensor<T> bce_loss(const Tensor<T>& p, const Tensor<T>& target, Reduction red) {
  if (p.shape() != target.shape())
    throw std::invalid_argument("bce_loss: shape mismatch " + shape_str(p.shape()) +
                                " vs " + shape_str(target.shape()));
  auto n = detail::make_result<T>({1}, {p.node(), target.node()});
  const T eps = static_cast<T>(kProbClamp);
  const T lo = eps, hi = T(1) - eps;
  T acc = T(0);
  for (size_t i = 0; i < p.data().size(); ++i) {
    T pc = std::min(hi, std::max(lo, p.data()[i]));
    T t = target.data()[i];
    acc -= t * std::log(pc) + (T(1) - t) * std::log(T(1) - pc);
  }
  T norm = red == Reduction::kMean ? T(1) / static_cast<T>(p.numel()) : T(1);
  n->data[0] = acc * norm;
  if (n->requires_grad)
    n->backprop = [lo, hi, norm](Node<T>& self) {
      Node<T>* pp = self.parents[0].get();
      Node<T>* pt = self.parents[1].get();
      T g = self.grad[0] * norm;
      for (size_t i = 0; i < pp->data.size(); ++i) {
        T pc = std::min(hi, std::max(lo, pp->data[i]));
        T t = pt->data[i];
        if (pp->requires_grad)
          pp->grad[i] += g * (-(t / pc) + (T(1) - t) / (T(1) - pc));
      }
    };
  return Tensor<T>::wrap(n);
}

// KL(q(z|x) || N(0,I)) from (mu, log_sigma), each [B,D]; summed over D,
// averaged over the batch.
template <class T>
Tensor<T> kl_divergence(const Tensor<T>& mu, const Tensor<T>& log_sigma) {
  if (mu.shape() != log_sigma.shape())
    throw std::invalid_argument("kl_divergence: shape mismatch");
  int B = mu.shape().size() == 2 ? mu.shape()[0] : 1;
  auto n = detail::make_result<T>({1}, {mu.node(), log_sigma.node()});
  T acc = T(0);
  for (size_t i = 0; i < mu.data().size(); ++i) {
    T m = mu.data()[i], ls = log_sigma.data()[i];
    acc += T(0.5) * (m * m + std::exp(T(2) * ls) - T(1) - T(2) * ls);
  }
  T norm = T(1) / static_cast<T>(B);
  n->data[0] = acc * norm;
  if (n->requires_grad)
    n->backprop = [norm](Node<T>& self) {
      Node<T>* pm = self.parents[0].get();
      Node<T>* pl = self.parents[1].get();
      T g = self.grad[0] * norm;
      for (size_t i = 0; i < pm->data.size(); ++i) {
        if (pm->requires_grad) pm->grad[i] += g * pm->data[i];
        if (pl->requires_grad)
          pl->grad[i] += g * (std::exp(T(2) * pl->data[i]) - T(1));
      }
    };
  return Tensor<T>::wrap(n);
}

// z = mu + exp(log_sigma) * eps with eps ~ N(0, I). Gradient flows to mu
// and log_sigma; eps is a constant.
template <class T, class Rng>
Tensor<T> reparameterize(const Tensor<T>& mu, const Tensor<T>& log_sigma, Rng& rng) {
  if (mu.shape() != log_sigma.shape())
    throw std::invalid_argument("reparameterize: shape mismatch");
  auto n = detail::make_result<T>(mu.shape(), {mu.node(), log_sigma.node()});
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<T> eps(mu.numel());
  for (auto& e : eps) e = static_cast<T>(dist(rng));
  for (size_t i = 0; i < n->data.size(); ++i)
    n->data[i] = mu.data()[i] + std::exp(log_sigma.data()[i]) * eps[i];
  if (n->requires_grad)
    n->backprop = [eps](Node<T>& self) {
      Node<T>* pm = self.parents[0].get();
      Node<T>* pl = self.parents[1].get();
      for (size_t i = 0; i < self.data.size(); ++i) {
        if (pm->requires_grad) pm->grad[i] += self.grad[i];
        if (pl->requires_grad)
          pl->grad[i] += self.grad[i] * std::exp(pl->data[i]) * eps[i];
      }
    };
  return Tensor<T>::wrap(n);
}

// Mean squared TD error over a batch: mean_b (q[b, a_b] - y_b)^2.
// Targets are constants.
template <class T>
Tensor<T> td_loss(const Tensor<T>& q, const std::vector<int>& actions,
                  const std::vector<T>& targets) {
  if (q.shape().size() != 2)
    throw std::invalid_argument("td_loss: expected q[B,A]");
  int B = q.shape()[0], A = q.shape()[1];
  if (static_cast<int>(actions.size()) != B || static_cast<int>(targets.size()) != B)
    throw std::invalid_argument("td_loss: batch size mismatch");
  auto n = detail::make_result<T>({1}, {q.node()});
  T acc = T(0);
  for (int bi = 0; bi < B; ++bi) {
    T d = q.data()[static_cast<int64_t>(bi) * A + actions[bi]] - targets[bi];
    acc += d * d;
  }
  n->data[0] = acc / static_cast<T>(B);
  if (n->requires_grad)
    n->backprop = [actions, targets, A, B](Node<T>& self) {
      Node<T>* pq = self.parents[0].get();
      T g = self.grad[0];
      for (int bi = 0; bi < B; ++bi) {
        int64_t idx = static_cast<int64_t>(bi) * A + actions[bi];
        pq->grad[idx] += g * T(2) * (pq->data[idx] - targets[bi]) / static_cast<T>(B);
      }
    };
  return Tensor<T>::wrap(n);
}

}  // namespace bevrl::tc
