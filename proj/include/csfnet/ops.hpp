#ifndef CSFNET_OPS_HPP
#define CSFNET_OPS_HPP

#include <algorithm>
#include <cmath>
#include <limits>

#include "csfnet/tensor.hpp"

namespace csf {

// ---------------------------------------------------------------------------
// Broadcasting helpers (numpy-style, right-aligned)
// ---------------------------------------------------------------------------

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (size_t i = 0; i < r; ++i) {
    int da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    int db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1)
      fail("broadcast: incompatible shapes " + shape_str(a) + " and " + shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

// Row-major strides of `s` aligned to a broadcast result of rank r;
// broadcast dimensions get stride 0.
inline std::vector<int64_t> broadcast_strides(const Shape& s, const Shape& out) {
  size_t r = out.size();
  std::vector<int64_t> st(r, 0);
  int64_t stride = 1;
  for (size_t i = s.size(); i-- > 0;) {
    size_t oi = i + (r - s.size());
    st[oi] = (s[i] == 1 && out[oi] != 1) ? 0 : stride;
    stride *= s[i];
  }
  return st;
}

namespace detail {

// Visits every output index of `out_shape`, handing the callback the flat
// offsets into the two broadcast operands and the output.
template <typename Fn>
void broadcast_iter(const Shape& out_shape, const std::vector<int64_t>& sa,
                    const std::vector<int64_t>& sb, Fn&& fn) {
  size_t r = out_shape.size();
  int64_t total = numel(out_shape);
  std::vector<int> idx(r, 0);
  int64_t oa = 0, ob = 0;
  for (int64_t o = 0; o < total; ++o) {
    fn(o, oa, ob);
    for (size_t i = r; i-- > 0;) {
      ++idx[i];
      oa += sa[i];
      ob += sb[i];
      if (idx[i] < out_shape[i]) break;
      oa -= sa[i] * out_shape[i];
      ob -= sb[i] * out_shape[i];
      idx[i] = 0;
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  Shape os = broadcast_shape(a.shape(), b.shape());
  std::vector<T> out(numel(os));
  const auto& av = a.value();
  const auto& bv = b.value();
  if (a.shape() == b.shape()) {
    for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  } else {
    auto sa = broadcast_strides(a.shape(), os), sb = broadcast_strides(b.shape(), os);
    detail::broadcast_iter(os, sa, sb,
                           [&](int64_t o, int64_t ia, int64_t ib) { out[o] = av[ia] + bv[ib]; });
  }
  auto an = a.node(), bn = b.node();
  Shape osc = os;
  return make_op_result<T>(std::move(os), std::move(out), {an, bn},
                           [an, bn, osc](TensorNode<T>& n) {
                             auto sa = broadcast_strides(an->shape, osc);
                             auto sb = broadcast_strides(bn->shape, osc);
                             detail::broadcast_iter(osc, sa, sb, [&](int64_t o, int64_t ia, int64_t ib) {
                               if (an->tracked) an->grad[ia] += n.grad[o];
                               if (bn->tracked) bn->grad[ib] += n.grad[o];
                             });
                           });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  Shape os = broadcast_shape(a.shape(), b.shape());
  std::vector<T> out(numel(os));
  const auto& av = a.value();
  const auto& bv = b.value();
  if (a.shape() == b.shape()) {
    for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  } else {
    auto sa = broadcast_strides(a.shape(), os), sb = broadcast_strides(b.shape(), os);
    detail::broadcast_iter(os, sa, sb,
                           [&](int64_t o, int64_t ia, int64_t ib) { out[o] = av[ia] * bv[ib]; });
  }
  auto an = a.node(), bn = b.node();
  Shape osc = os;
  return make_op_result<T>(std::move(os), std::move(out), {an, bn},
                           [an, bn, osc](TensorNode<T>& n) {
                             auto sa = broadcast_strides(an->shape, osc);
                             auto sb = broadcast_strides(bn->shape, osc);
                             detail::broadcast_iter(osc, sa, sb, [&](int64_t o, int64_t ia, int64_t ib) {
                               if (an->tracked) an->grad[ia] += n.grad[o] * bn->value[ib];
                               if (bn->tracked) bn->grad[ib] += n.grad[o] * an->value[ia];
                             });
                           });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  std::vector<T> out(a.value());
  for (auto& v : out) v *= c;
  auto an = a.node();
  return make_op_result<T>(a.shape(), std::move(out), {an}, [an, c](TensorNode<T>& n) {
    for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += c * n.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Elementwise unary ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.value());
  for (auto& v : out) v = v > T(0) ? v : T(0);
  auto an = a.node();
  return make_op_result<T>(a.shape(), std::move(out), {an}, [an](TensorNode<T>& n) {
    for (size_t i = 0; i < n.grad.size(); ++i)
      if (an->value[i] > T(0)) an->grad[i] += n.grad[i];
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  std::vector<T> out(a.value().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-a.value()[i]));
  auto an = a.node();
  auto yv = out;
  return make_op_result<T>(a.shape(), std::move(out), {an}, [an, yv](TensorNode<T>& n) {
    for (size_t i = 0; i < n.grad.size(); ++i)
      an->grad[i] += n.grad[i] * yv[i] * (T(1) - yv[i]);
  });
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.size())
    fail("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  auto an = a.node();
  return make_op_result<T>(std::move(shape), a.value(), {an}, [an](TensorNode<T>& n) {
    for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
  });
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, int axis) {
  if (a.rank() != b.rank()) fail("concat: rank mismatch");
  if (axis < 0 || axis >= a.rank()) fail("concat: invalid axis " + std::to_string(axis));
  for (int i = 0; i < a.rank(); ++i)
    if (i != axis && a.dim(i) != b.dim(i))
      fail("concat: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
           " differ off the concat axis");
  Shape os = a.shape();
  os[axis] += b.dim(axis);
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= a.dim(i);
  for (int i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  int64_t wa = a.dim(axis) * inner, wb = b.dim(axis) * inner;
  std::vector<T> out(numel(os));
  for (int64_t o = 0; o < outer; ++o) {
    std::copy_n(a.value().data() + o * wa, wa, out.data() + o * (wa + wb));
    std::copy_n(b.value().data() + o * wb, wb, out.data() + o * (wa + wb) + wa);
  }
  auto an = a.node(), bn = b.node();
  return make_op_result<T>(std::move(os), std::move(out), {an, bn},
                           [an, bn, outer, wa, wb](TensorNode<T>& n) {
                             for (int64_t o = 0; o < outer; ++o) {
                               const T* g = n.grad.data() + o * (wa + wb);
                               if (an->tracked)
                                 for (int64_t i = 0; i < wa; ++i) an->grad[o * wa + i] += g[i];
                               if (bn->tracked)
                                 for (int64_t i = 0; i < wb; ++i) bn->grad[o * wb + i] += g[wa + i];
                             }
                           });
}

// [N,A,B] -> [N,B,A]
template <typename T>
Tensor<T> transpose12(const Tensor<T>& x) {
  if (x.rank() != 3) fail("transpose12: expected rank-3 tensor, got " + shape_str(x.shape()));
  int N = x.dim(0), A = x.dim(1), B = x.dim(2);
  std::vector<T> out(static_cast<size_t>(N) * A * B);
  for (int n = 0; n < N; ++n)
    for (int i = 0; i < A; ++i)
      for (int j = 0; j < B; ++j)
        out[(static_cast<int64_t>(n) * B + j) * A + i] = x.value()[(static_cast<int64_t>(n) * A + i) * B + j];
  auto xn = x.node();
  return make_op_result<T>({N, B, A}, std::move(out), {xn}, [xn, N, A, B](TensorNode<T>& n) {
    for (int b = 0; b < N; ++b)
      for (int i = 0; i < A; ++i)
        for (int j = 0; j < B; ++j)
          xn->grad[(static_cast<int64_t>(b) * A + i) * B + j] +=
              n.grad[(static_cast<int64_t>(b) * B + j) * A + i];
  });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  T s = T(0);
  for (T v : a.value()) s += v;
  auto an = a.node();
  return make_op_result<T>({1}, {s}, {an}, [an](TensorNode<T>& n) {
    for (auto& g : an->grad) g += n.grad[0];
  });
}

// Dot product against a fixed weight vector; handy for scalarizing outputs.
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& a, const std::vector<T>& w) {
  if (static_cast<int64_t>(w.size()) != a.size()) fail("weighted_sum: weight length mismatch");
  T s = T(0);
  for (size_t i = 0; i < w.size(); ++i) s += a.value()[i] * w[i];
  auto an = a.node();
  auto wc = w;
  return make_op_result<T>({1}, {s}, {an}, [an, wc](TensorNode<T>& n) {
    for (size_t i = 0; i < wc.size(); ++i) an->grad[i] += wc[i] * n.grad[0];
  });
}

namespace detail {
inline void axis_split(const Shape& s, int axis, int64_t& outer, int64_t& len, int64_t& inner) {
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    fail("invalid axis " + std::to_string(axis) + " for shape " + shape_str(s));
  outer = 1;
  inner = 1;
  len = s[axis];
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}
}  // namespace detail

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& x, int axis, bool keepdim = false) {
  int64_t outer, len, inner;
  detail::axis_split(x.shape(), axis, outer, len, inner);
  Shape os = x.shape();
  if (keepdim)
    os[axis] = 1;
  else
    os.erase(os.begin() + axis);
  std::vector<T> out(outer * inner, T(0));
  const T* xv = x.value().data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t l = 0; l < len; ++l)
      for (int64_t i = 0; i < inner; ++i) out[o * inner + i] += xv[(o * len + l) * inner + i];
  T invl = T(1) / static_cast<T>(len);
  for (auto& v : out) v *= invl;
  auto xn = x.node();
  return make_op_result<T>(std::move(os), std::move(out), {xn},
                           [xn, outer, len, inner, invl](TensorNode<T>& n) {
                             for (int64_t o = 0; o < outer; ++o)
                               for (int64_t l = 0; l < len; ++l)
                                 for (int64_t i = 0; i < inner; ++i)
                                   xn->grad[(o * len + l) * inner + i] += invl * n.grad[o * inner + i];
                           });
}

template <typename T>
Tensor<T> max_axis(const Tensor<T>& x, int axis, bool keepdim = false) {
  int64_t outer, len, inner;
  detail::axis_split(x.shape(), axis, outer, len, inner);
  Shape os = x.shape();
  if (keepdim)
    os[axis] = 1;
  else
    os.erase(os.begin() + axis);
  std::vector<T> out(outer * inner);
  std::vector<int64_t> arg(outer * inner);
  const T* xv = x.value().data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      T best = xv[o * len * inner + i];
      int64_t bi = o * len * inner + i;
      for (int64_t l = 1; l < len; ++l) {
        int64_t idx = (o * len + l) * inner + i;
        if (xv[idx] > best) {
          best = xv[idx];
          bi = idx;
        }
      }
      out[o * inner + i] = best;
      arg[o * inner + i] = bi;
    }
  auto xn = x.node();
  return make_op_result<T>(std::move(os), std::move(out), {xn},
                           [xn, arg](TensorNode<T>& n) {
                             for (size_t i = 0; i < arg.size(); ++i) xn->grad[arg[i]] += n.grad[i];
                           });
}

// ---------------------------------------------------------------------------
// softmax
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  int64_t outer, len, inner;
  detail::axis_split(x.shape(), axis, outer, len, inner);
  std::vector<T> out(x.size());
  const T* xv = x.value().data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      T mx = xv[o * len * inner + i];
      for (int64_t l = 1; l < len; ++l) mx = std::max(mx, xv[(o * len + l) * inner + i]);
      T z = T(0);
      for (int64_t l = 0; l < len; ++l) {
        T e = std::exp(xv[(o * len + l) * inner + i] - mx);
        out[(o * len + l) * inner + i] = e;
        z += e;
      }
      for (int64_t l = 0; l < len; ++l) out[(o * len + l) * inner + i] /= z;
    }
  auto xn = x.node();
  auto yv = out;
  return make_op_result<T>(x.shape(), std::move(out), {xn},
                           [xn, yv, outer, len, inner](TensorNode<T>& n) {
                             for (int64_t o = 0; o < outer; ++o)
                               for (int64_t i = 0; i < inner; ++i) {
                                 T dot = T(0);
                                 for (int64_t l = 0; l < len; ++l) {
                                   int64_t idx = (o * len + l) * inner + i;
                                   dot += yv[idx] * n.grad[idx];
                                 }
                                 for (int64_t l = 0; l < len; ++l) {
                                   int64_t idx = (o * len + l) * inner + i;
                                   xn->grad[idx] += yv[idx] * (n.grad[idx] - dot);
                                 }
                               }
                           });
}

// ---------------------------------------------------------------------------
// Linear / matmul
// ---------------------------------------------------------------------------

// x [N,F] · w [G,F]^T + b [G]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1)
    fail("linear: expected x[N,F], w[G,F], b[G]");
  int N = x.dim(0), F = x.dim(1), G = w.dim(0);
  if (w.dim(1) != F || b.dim(0) != G)
    fail("linear: dimension mismatch x" + shape_str(x.shape()) + " w" + shape_str(w.shape()) +
         " b" + shape_str(b.shape()));
  std::vector<T> out(static_cast<size_t>(N) * G);
  const T* xv = x.value().data();
  const T* wv = w.value().data();
  for (int n = 0; n < N; ++n)
    for (int g = 0; g < G; ++g) {
      T acc = b.value()[g];
      const T* xr = xv + static_cast<int64_t>(n) * F;
      const T* wr = wv + static_cast<int64_t>(g) * F;
      for (int f = 0; f < F; ++f) acc += xr[f] * wr[f];
      out[static_cast<int64_t>(n) * G + g] = acc;
    }
  auto xn = x.node(), wn = w.node(), bn = b.node();
  return make_op_result<T>({N, G}, std::move(out), {xn, wn, bn},
                           [xn, wn, bn, N, F, G](TensorNode<T>& n) {
                             for (int i = 0; i < N; ++i)
                               for (int g = 0; g < G; ++g) {
                                 T gy = n.grad[static_cast<int64_t>(i) * G + g];
                                 if (gy == T(0)) continue;
                                 if (bn->tracked) bn->grad[g] += gy;
                                 for (int f = 0; f < F; ++f) {
                                   if (xn->tracked)
                                     xn->grad[static_cast<int64_t>(i) * F + f] +=
                                         gy * wn->value[static_cast<int64_t>(g) * F + f];
                                   if (wn->tracked)
                                     wn->grad[static_cast<int64_t>(g) * F + f] +=
                                         gy * xn->value[static_cast<int64_t>(i) * F + f];
                                 }
                               }
                           });
}

// a [N,S,A] · b [N,T,A]^T -> [N,S,T]
template <typename T>
Tensor<T> bmm_nt(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2))
    fail("bmm_nt: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  int N = a.dim(0), S = a.dim(1), A = a.dim(2), U = b.dim(1);
  std::vector<T> out(static_cast<size_t>(N) * S * U);
  for (int n = 0; n < N; ++n)
    for (int i = 0; i < S; ++i)
      for (int j = 0; j < U; ++j) {
        const T* ar = a.value().data() + (static_cast<int64_t>(n) * S + i) * A;
        const T* br = b.value().data() + (static_cast<int64_t>(n) * U + j) * A;
        T acc = T(0);
        for (int k = 0; k < A; ++k) acc += ar[k] * br[k];
        out[(static_cast<int64_t>(n) * S + i) * U + j] = acc;
      }
  auto an = a.node(), bn = b.node();
  return make_op_result<T>({N, S, U}, std::move(out), {an, bn},
                           [an, bn, N, S, A, U](TensorNode<T>& n) {
                             for (int b2 = 0; b2 < N; ++b2)
                               for (int i = 0; i < S; ++i)
                                 for (int j = 0; j < U; ++j) {
                                   T g = n.grad[(static_cast<int64_t>(b2) * S + i) * U + j];
                                   if (g == T(0)) continue;
                                   int64_t ao = (static_cast<int64_t>(b2) * S + i) * A;
                                   int64_t bo = (static_cast<int64_t>(b2) * U + j) * A;
                                   for (int k = 0; k < A; ++k) {
                                     if (an->tracked) an->grad[ao + k] += g * bn->value[bo + k];
                                     if (bn->tracked) bn->grad[bo + k] += g * an->value[ao + k];
                                   }
                                 }
                           });
}

// a [N,S,U] · b [N,U,C] -> [N,S,C]
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
    fail("bmm: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  int N = a.dim(0), S = a.dim(1), U = a.dim(2), C = b.dim(2);
  std::vector<T> out(static_cast<size_t>(N) * S * C, T(0));
  for (int n = 0; n < N; ++n)
    for (int i = 0; i < S; ++i) {
      T* orow = out.data() + (static_cast<int64_t>(n) * S + i) * C;
      for (int u = 0; u < U; ++u) {
        T av = a.value()[(static_cast<int64_t>(n) * S + i) * U + u];
        const T* brow = b.value().data() + (static_cast<int64_t>(n) * U + u) * C;
        for (int c = 0; c < C; ++c) orow[c] += av * brow[c];
      }
    }
  auto an = a.node(), bn = b.node();
  return make_op_result<T>({N, S, C}, std::move(out), {an, bn},
                           [an, bn, N, S, U, C](TensorNode<T>& n) {
                             for (int b2 = 0; b2 < N; ++b2)
                               for (int i = 0; i < S; ++i) {
                                 const T* grow = n.grad.data() + (static_cast<int64_t>(b2) * S + i) * C;
                                 for (int u = 0; u < U; ++u) {
                                   int64_t aidx = (static_cast<int64_t>(b2) * S + i) * U + u;
                                   int64_t boff = (static_cast<int64_t>(b2) * U + u) * C;
                                   if (an->tracked) {
                                     T acc = T(0);
                                     for (int c = 0; c < C; ++c) acc += grow[c] * bn->value[boff + c];
                                     an->grad[aidx] += acc;
                                   }
                                   if (bn->tracked) {
                                     T av = an->value[aidx];
                                     for (int c = 0; c < C; ++c) bn->grad[boff + c] += av * grow[c];
                                   }
                                 }
                               }
                           });
}

// ---------------------------------------------------------------------------
// Cross-entropy
// ---------------------------------------------------------------------------

// Mean of -log softmax(logits)[label] over the batch.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) fail("cross_entropy: logits must be [N,K]");
  int N = logits.dim(0), K = logits.dim(1);
  if (static_cast<int>(labels.size()) != N)
    fail("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
         std::to_string(N));
  for (int l : labels)
    if (l < 0 || l >= K) fail("cross_entropy: label " + std::to_string(l) + " outside [0," +
                              std::to_string(K) + ")");
  std::vector<T> prob(static_cast<size_t>(N) * K);
  T loss = T(0);
  for (int n = 0; n < N; ++n) {
    const T* row = logits.value().data() + static_cast<int64_t>(n) * K;
    T mx = row[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    T z = T(0);
    for (int k = 0; k < K; ++k) z += std::exp(row[k] - mx);
    T logz = std::log(z) + mx;
    for (int k = 0; k < K; ++k) prob[static_cast<int64_t>(n) * K + k] = std::exp(row[k] - logz);
    loss += logz - row[labels[n]];
  }
  loss /= static_cast<T>(N);
  auto ln = logits.node();
  auto lab = labels;
  return make_op_result<T>({1}, {loss}, {ln}, [ln, prob, lab, N, K](TensorNode<T>& n) {
    T g = n.grad[0] / static_cast<T>(N);
    for (int i = 0; i < N; ++i)
      for (int k = 0; k < K; ++k)
        ln->grad[static_cast<int64_t>(i) * K + k] +=
            g * (prob[static_cast<int64_t>(i) * K + k] - (k == lab[i] ? T(1) : T(0)));
  });
}

}  // namespace csf

#endif  // CSFNET_OPS_HPP
