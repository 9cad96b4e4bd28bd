#ifndef CSFNET_NN_HPP
#define CSFNET_NN_HPP

#include <string>
#include <vector>

#include "csfnet/conv.hpp"
#include "csfnet/ops.hpp"
#include "csfnet/rng.hpp"
#include "csfnet/tensor.hpp"

namespace csf {

// A learnable tensor with Adam state.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> tensor;
  std::vector<T> adam_m, adam_v;
  int64_t step_count = 0;

  Param() = default;
  Param(std::string n, Tensor<T> t) : name(std::move(n)), tensor(std::move(t)) {
    adam_m.assign(tensor.size(), T(0));
    adam_v.assign(tensor.size(), T(0));
  }
};

template <typename T>
using ParamList = std::vector<Param<T>*>;

// uniform(-b, b) with b = sqrt(6 / (fan_in + fan_out))
template <typename T>
void xavier_fill(Tensor<T>& t, int fan_in, int fan_out, Rng& rng) {
  double b = std::sqrt(6.0 / (fan_in + fan_out));
  for (auto& v : t.value()) v = static_cast<T>(rng.uniform(-b, b));
}

template <typename T>
struct LinearLayer {
  Param<T> w, b;

  LinearLayer() = default;
  LinearLayer(const std::string& name, int in, int out, Rng& rng, bool zero_init = false) {
    w = Param<T>(name + ".w", Tensor<T>({out, in}, true));
    b = Param<T>(name + ".b", Tensor<T>({out}, true));
    if (!zero_init) xavier_fill(w.tensor, in, out, rng);
  }
  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, w.tensor, b.tensor); }
  // Applies the layer along the last axis of a [N,S,F] tensor.
  Tensor<T> tokens(const Tensor<T>& x) const {
    int N = x.dim(0), S = x.dim(1), F = x.dim(2);
    Tensor<T> flat = reshape(x, {N * S, F});
    return reshape(linear(flat, w.tensor, b.tensor), {N, S, w.tensor.dim(0)});
  }
  void params(ParamList<T>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

template <typename T>
struct Conv3dLayer {
  Param<T> w, b;
  int stride = 1, pad = 0;

  Conv3dLayer() = default;
  Conv3dLayer(const std::string& name, int in_ch, int out_ch, int kernel, int stride_, int pad_,
              Rng& rng, bool zero_init = false)
      : stride(stride_), pad(pad_) {
    w = Param<T>(name + ".w", Tensor<T>({out_ch, in_ch, kernel, kernel, kernel}, true));
    b = Param<T>(name + ".b", Tensor<T>({out_ch}, true));
    int k3 = kernel * kernel * kernel;
    if (!zero_init) xavier_fill(w.tensor, in_ch * k3, out_ch * k3, rng);
  }
  Tensor<T> operator()(const Tensor<T>& x) const { return conv3d(x, w.tensor, b.tensor, stride, pad); }
  void params(ParamList<T>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

template <typename T>
void zero_grads(const ParamList<T>& params) {
  for (auto* p : params) p->tensor.zero_grad();
}

// Bias-corrected Adam. Gradients are left untouched; the caller clears them.
template <typename T>
void adam_step(const ParamList<T>& params, T lr, T beta1, T beta2, T eps) {
  for (auto* p : params)
    if (!p->tensor.tracked()) fail("adam_step: parameter '" + p->name + "' carries no gradient");
  for (auto* p : params) {
    p->step_count += 1;
    T c1 = T(1) - std::pow(beta1, static_cast<T>(p->step_count));
    T c2 = T(1) - std::pow(beta2, static_cast<T>(p->step_count));
    auto& val = p->tensor.value();
    const auto& g = p->tensor.grad();
    for (size_t i = 0; i < val.size(); ++i) {
      p->adam_m[i] = beta1 * p->adam_m[i] + (T(1) - beta1) * g[i];
      p->adam_v[i] = beta2 * p->adam_v[i] + (T(1) - beta2) * g[i] * g[i];
      T mhat = p->adam_m[i] / c1;
      T vhat = p->adam_v[i] / c2;
      val[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

}  // namespace csf

#endif  // CSFNET_NN_HPP
