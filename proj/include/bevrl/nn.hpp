#pragma once

// Layer-spec driven networks on top of the autodiff core, the Adam
// optimizer, and the "BLTM" checkpoint format.

#include <cstdio>
#include <cstring>
#include <map>
#include <string>

#include "bevrl/tensor.hpp"

namespace bevrl::tc {

enum class LayerKind : uint8_t {
  kConv = 0,
  kConvTranspose = 1,
  kLinear = 2,
  kRelu = 3,
  kSigmoid = 4,
  kFlatten = 5,
  kReshape = 6,
};

struct LayerSpec {
  LayerKind kind;
  // conv / transposed-conv
  int in_ch = 0, out_ch = 0, kernel = 0, stride = 1, pad = 0;
  // linear
  int in_dim = 0, out_dim = 0;
  // reshape target (without batch dim)
  std::vector<int> target_shape;

  static LayerSpec conv(int in_ch, int out_ch, int kernel, int stride, int pad) {
    LayerSpec s;
    s.kind = LayerKind::kConv;
    s.in_ch = in_ch, s.out_ch = out_ch, s.kernel = kernel, s.stride = stride, s.pad = pad;
    return s;
  }
  static LayerSpec tconv(int in_ch, int out_ch, int kernel, int stride, int pad) {
    LayerSpec s = conv(in_ch, out_ch, kernel, stride, pad);
    s.kind = LayerKind::kConvTranspose;
    return s;
  }
  static LayerSpec dense(int in_dim, int out_dim) {
    LayerSpec s;
    s.kind = LayerKind::kLinear;
    s.in_dim = in_dim, s.out_dim = out_dim;
    return s;
  }
  static LayerSpec relu() { return LayerSpec{LayerKind::kRelu}; }
  static LayerSpec sigmoid() { return LayerSpec{LayerKind::kSigmoid}; }
  static LayerSpec flatten() { return LayerSpec{LayerKind::kFlatten}; }
  static LayerSpec to_shape(std::vector<int> shape) {
    LayerSpec s;
    s.kind = LayerKind::kReshape;
    s.target_shape = std::move(shape);
    return s;
  }

  bool operator==(const LayerSpec& o) const {
    return kind == o.kind && in_ch == o.in_ch && out_ch == o.out_ch &&
           kernel == o.kernel && stride == o.stride && pad == o.pad &&
           in_dim == o.in_dim && out_dim == o.out_dim && target_shape == o.target_shape;
  }
};

// Output shape (without batch dim) of a layer given its input shape.
// Throws on any inconsistency; the conv arithmetic is asserted here so a
// bad architecture fails at construction, not mid-training.
inline std::vector<int> layer_output_shape(const LayerSpec& l,
                                           const std::vector<int>& in, int index) {
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument("layer " + std::to_string(index) + ": " + what +
                                " (input " + shape_str(in) + ")");
  };
  switch (l.kind) {
    case LayerKind::kConv: {
      if (in.size() != 3 || in[0] != l.in_ch) fail("conv expects [in_ch,H,W]");
      int ho = (in[1] + 2 * l.pad - l.kernel) / l.stride + 1;
      int wo = (in[2] + 2 * l.pad - l.kernel) / l.stride + 1;
      if (ho <= 0 || wo <= 0) fail("conv output collapsed");
      return {l.out_ch, ho, wo};
    }
    case LayerKind::kConvTranspose: {
      if (in.size() != 3 || in[0] != l.in_ch) fail("tconv expects [in_ch,H,W]");
      int ho = (in[1] - 1) * l.stride - 2 * l.pad + l.kernel;
      int wo = (in[2] - 1) * l.stride - 2 * l.pad + l.kernel;
      if (ho <= 0 || wo <= 0) fail("tconv output collapsed");
      return {l.out_ch, ho, wo};
    }
    case LayerKind::kLinear: {
      if (in.size() != 1 || in[0] != l.in_dim) fail("linear expects [in_dim]");
      return {l.out_dim};
    }
    case LayerKind::kRelu:
    case LayerKind::kSigmoid:
      return in;
    case LayerKind::kFlatten:
      return {static_cast<int>(shape_numel(in))};
    case LayerKind::kReshape: {
      if (shape_numel(l.target_shape) != shape_numel(in)) fail("reshape numel mismatch");
      return l.target_shape;
    }
  }
  fail("unknown layer kind");
  return {};
}

template <class T>
class Network {
 public:
  Network() = default;

  // input_shape excludes the batch dimension.
  Network(std::vector<LayerSpec> specs, std::vector<int> input_shape)
      : specs_(std::move(specs)), input_shape_(std::move(input_shape)) {
    std::vector<int> cur = input_shape_;
    for (size_t i = 0; i < specs_.size(); ++i)
      cur = layer_output_shape(specs_[i], cur, static_cast<int>(i));
    output_shape_ = cur;
    for (const auto& l : specs_) {
      switch (l.kind) {
        case LayerKind::kConv:
          params_.emplace_back(
              Tensor<T>({l.out_ch, l.in_ch, l.kernel, l.kernel}, true));
          params_.emplace_back(Tensor<T>({l.out_ch}, true));
          break;
        case LayerKind::kConvTranspose:
          params_.emplace_back(
              Tensor<T>({l.in_ch, l.out_ch, l.kernel, l.kernel}, true));
          params_.emplace_back(Tensor<T>({l.out_ch}, true));
          break;
        case LayerKind::kLinear:
          params_.emplace_back(Tensor<T>({l.out_dim, l.in_dim}, true));
          params_.emplace_back(Tensor<T>({l.out_dim}, true));
          break;
        default:
          break;
      }
    }
  }

  template <class Rng>
  void init(Rng& rng) {
    size_t pi = 0;
    for (const auto& l : specs_) {
      int fan_in = 0;
      switch (l.kind) {
        case LayerKind::kConv:
        case LayerKind::kConvTranspose:
          fan_in = l.in_ch * l.kernel * l.kernel;
          break;
        case LayerKind::kLinear:
          fan_in = l.in_dim;
          break;
        default:
          continue;
      }
      T bound = static_cast<T>(std::sqrt(1.0 / fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : params_[pi].data()) v = static_cast<T>(dist(rng));
      for (auto& v : params_[pi + 1].data()) v = T(0);
      pi += 2;
    }
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    std::vector<int> in_no_batch(x.shape().begin() + 1, x.shape().end());
    if (in_no_batch != input_shape_)
      throw std::invalid_argument("forward: input shape " + shape_str(x.shape()) +
                                  " does not match network input " +
                                  shape_str(input_shape_));
    int batch = x.shape()[0];
    Tensor<T> cur = x;
    size_t pi = 0;
    for (size_t i = 0; i < specs_.size(); ++i) {
      const LayerSpec& l = specs_[i];
      switch (l.kind) {
        case LayerKind::kConv:
          cur = conv2d(cur, params_[pi], params_[pi + 1], l.stride, l.pad);
          pi += 2;
          break;
        case LayerKind::kConvTranspose:
          cur = conv_transpose2d(cur, params_[pi], params_[pi + 1], l.stride, l.pad);
          pi += 2;
          break;
        case LayerKind::kLinear:
          cur = linear(cur, params_[pi], params_[pi + 1]);
          pi += 2;
          break;
        case LayerKind::kRelu:
          cur = relu(cur);
          break;
        case LayerKind::kSigmoid:
          cur = sigmoid(cur);
          break;
        case LayerKind::kFlatten:
          cur = flatten(cur);
          break;
        case LayerKind::kReshape: {
          std::vector<int> shp = {batch};
          shp.insert(shp.end(), l.target_shape.begin(), l.target_shape.end());
          cur = reshape(cur, shp);
          break;
        }
      }
    }
    return cur;
  }

  std::vector<Tensor<T>>& parameters() { return params_; }
  const std::vector<Tensor<T>>& parameters() const { return params_; }
  const std::vector<LayerSpec>& specs() const { return specs_; }
  const std::vector<int>& input_shape() const { return input_shape_; }
  const std::vector<int>& output_shape() const { return output_shape_; }

  void set_trainable(bool on) {
    for (auto& p : params_) p.set_requires_grad(on);
  }

  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.numel();
    return n;
  }

 private:
  std::vector<LayerSpec> specs_;
  std::vector<int> input_shape_;
  std::vector<int> output_shape_;
  std::vector<Tensor<T>> params_;
};

// ---------------------------------------------------------------------------
// Adam with bias correction. Grads are zeroed after each step.
// ---------------------------------------------------------------------------
template <class T>
class Adam {
 public:
  explicit Adam(T lr = T(1e-3), T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::vector<Tensor<T>>& params) {
    if (slots_.empty()) {
      slots_.resize(params.size());
      for (size_t i = 0; i < params.size(); ++i) {
        slots_[i].m.assign(params[i].numel(), T(0));
        slots_[i].v.assign(params[i].numel(), T(0));
      }
    }
    if (slots_.size() != params.size())
      throw std::invalid_argument("adam: parameter list changed size");
    ++t_;
    T bc1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
    T bc2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i].data();
      auto& g = params[i].grad();
      if (slots_[i].m.size() != p.size())
        throw std::invalid_argument("adam: moment/parameter shape mismatch at slot " +
                                    std::to_string(i));
      auto& m = slots_[i].m;
      auto& v = slots_[i].v;
      for (size_t j = 0; j < p.size(); ++j) {
        m[j] = beta1_ * m[j] + (T(1) - beta1_) * g[j];
        v[j] = beta2_ * v[j] + (T(1) - beta2_) * g[j] * g[j];
        T mh = m[j] / bc1;
        T vh = v[j] / bc2;
        p[j] -= lr_ * mh / (std::sqrt(vh) + eps_);
      }
      params[i].zero_grad();
    }
  }

  int64_t step_count() const { return t_; }
  T lr() const { return lr_; }
  void set_lr(T lr) { lr_ = lr; }

 private:
  struct Slot {
    std::vector<T> m, v;
  };
  std::vector<Slot> slots_;
  int64_t t_ = 0;
  T lr_, beta1_, beta2_, eps_;
};

// ---------------------------------------------------------------------------
// Checkpoint io: magic "BLTM", u16 version, named networks, each with a
// layer-spec table and a little-endian f32 parameter blob.
// ---------------------------------------------------------------------------
namespace ckpt {

inline void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}
inline void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_i32(std::string& out, int32_t v) { put_u32(out, static_cast<uint32_t>(v)); }
inline void put_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

class Reader {
 public:
  Reader(const std::string& buf, std::string origin)
      : buf_(buf), origin_(std::move(origin)) {}
  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint8_t>(buf_[pos_]) |
                 (static_cast<uint8_t>(buf_[pos_ + 1]) << 8);
    pos_ += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<uint32_t>(static_cast<uint8_t>(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  int32_t i32() { return static_cast<int32_t>(u32()); }
  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  size_t pos() const { return pos_; }
  void fail(const std::string& what) const {
    throw std::runtime_error(origin_ + ": " + what + " at offset " +
                             std::to_string(pos_));
  }

 private:
  void need(size_t n) const {
    if (pos_ + n > buf_.size()) fail("truncated file");
  }
  const std::string& buf_;
  std::string origin_;
  size_t pos_ = 0;
};

inline void write_spec(std::string& out, const LayerSpec& l) {
  out.push_back(static_cast<char>(l.kind));
  put_i32(out, l.in_ch);
  put_i32(out, l.out_ch);
  put_i32(out, l.kernel);
  put_i32(out, l.stride);
  put_i32(out, l.pad);
  put_i32(out, l.in_dim);
  put_i32(out, l.out_dim);
  put_u16(out, static_cast<uint16_t>(l.target_shape.size()));
  for (int d : l.target_shape) put_i32(out, d);
}

inline LayerSpec read_spec(Reader& r) {
  LayerSpec l;
  uint8_t kind = static_cast<uint8_t>(r.bytes(1)[0]);
  if (kind > static_cast<uint8_t>(LayerKind::kReshape)) r.fail("bad layer kind");
  l.kind = static_cast<LayerKind>(kind);
  l.in_ch = r.i32();
  l.out_ch = r.i32();
  l.kernel = r.i32();
  l.stride = r.i32();
  l.pad = r.i32();
  l.in_dim = r.i32();
  l.out_dim = r.i32();
  uint16_t nd = r.u16();
  l.target_shape.resize(nd);
  for (auto& d : l.target_shape) d = r.i32();
  return l;
}

}  // namespace ckpt

inline constexpr uint16_t kCheckpointVersion = 1;

template <class T>
std::string serialize_networks(const std::map<std::string, const Network<T>*>& nets) {
  std::string out = "BLTM";
  ckpt::put_u16(out, kCheckpointVersion);
  ckpt::put_u16(out, static_cast<uint16_t>(nets.size()));
  for (const auto& [name, net] : nets) {
    ckpt::put_u16(out, static_cast<uint16_t>(name.size()));
    out += name;
    ckpt::put_u16(out, static_cast<uint16_t>(net->input_shape().size()));
    for (int d : net->input_shape()) ckpt::put_i32(out, d);
    ckpt::put_u16(out, static_cast<uint16_t>(net->specs().size()));
    for (const auto& l : net->specs()) ckpt::write_spec(out, l);
    ckpt::put_u32(out, static_cast<uint32_t>(net->param_count()));
    for (const auto& p : net->parameters())
      for (T v : p.data()) ckpt::put_f32(out, static_cast<float>(v));
  }
  return out;
}

template <class T>
std::map<std::string, Network<T>> deserialize_networks(const std::string& buf,
                                                       const std::string& origin) {
  ckpt::Reader r(buf, origin);
  if (r.bytes(4) != "BLTM")
    throw std::runtime_error(origin + ": bad magic, expected BLTM at offset 0");
  uint16_t version = r.u16();
  if (version != kCheckpointVersion)
    throw std::runtime_error(origin + ": unsupported checkpoint version " +
                             std::to_string(version));
  uint16_t count = r.u16();
  std::map<std::string, Network<T>> nets;
  for (uint16_t k = 0; k < count; ++k) {
    uint16_t name_len = r.u16();
    std::string name = r.bytes(name_len);
    uint16_t in_dims = r.u16();
    std::vector<int> input_shape(in_dims);
    for (auto& d : input_shape) d = r.i32();
    uint16_t n_layers = r.u16();
    std::vector<LayerSpec> specs;
    specs.reserve(n_layers);
    for (uint16_t i = 0; i < n_layers; ++i) specs.push_back(ckpt::read_spec(r));
    Network<T> net(std::move(specs), std::move(input_shape));
    uint32_t n_params = r.u32();
    if (n_params != static_cast<uint32_t>(net.param_count())) r.fail("param count mismatch");
    for (auto& p : net.parameters())
      for (auto& v : p.data()) v = static_cast<T>(r.f32());
    nets.emplace(std::move(name), std::move(net));
  }
  return nets;
}

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

template <class T>
void save_networks(const std::string& path,
                   const std::map<std::string, const Network<T>*>& nets) {
  write_file(path, serialize_networks(nets));
}

template <class T>
std::map<std::string, Network<T>> load_networks(const std::string& path) {
  return deserialize_networks<T>(read_file(path), path);
}

}  // namespace bevrl::tc
