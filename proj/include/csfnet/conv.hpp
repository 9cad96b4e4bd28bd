#ifndef CSFNET_CONV_HPP
#define CSFNET_CONV_HPP

#include <algorithm>
#include <cmath>

#include "csfnet/tensor.hpp"

namespace csf {

namespace detail {

inline int conv_out_extent(int in, int k, int stride, int pad, const char* what) {
  int out = (in + 2 * pad - k) / stride + 1;
  if (in + 2 * pad < k || out <= 0)
    fail(std::string(what) + ": non-positive output extent (in=" + std::to_string(in) +
         ", kernel=" + std::to_string(k) + ", stride=" + std::to_string(stride) +
         ", pad=" + std::to_string(pad) + ")");
  return out;
}

// Gathers conv windows of x[n] into cols[K x M], K = C*kd*kh*kw, M = od*oh*ow.
template <typename T>
void im2col(const T* x, int C, int D, int H, int W, int kd, int kh, int kw, int stride, int pad,
            int od, int oh, int ow, T* cols) {
  int64_t M = static_cast<int64_t>(od) * oh * ow;
  int64_t row = 0;
  for (int c = 0; c < C; ++c)
    for (int zk = 0; zk < kd; ++zk)
      for (int yk = 0; yk < kh; ++yk)
        for (int xk = 0; xk < kw; ++xk, ++row) {
          T* dst = cols + row * M;
          for (int z = 0; z < od; ++z) {
            int iz = z * stride - pad + zk;
            for (int y = 0; y < oh; ++y) {
              int iy = y * stride - pad + yk;
              T* d = dst + (static_cast<int64_t>(z) * oh + y) * ow;
              if (iz < 0 || iz >= D || iy < 0 || iy >= H) {
                std::fill_n(d, ow, T(0));
                continue;
              }
              const T* src = x + (static_cast<int64_t>(c) * D + iz) * H * W + static_cast<int64_t>(iy) * W;
              for (int xo = 0; xo < ow; ++xo) {
                int ix = xo * stride - pad + xk;
                d[xo] = (ix >= 0 && ix < W) ? src[ix] : T(0);
              }
            }
          }
        }
}

// Scatter-adds cols back into the (gradient of the) input volume.
template <typename T>
void col2im_add(const T* cols, int C, int D, int H, int W, int kd, int kh, int kw, int stride,
                int pad, int od, int oh, int ow, T* x) {
  int64_t M = static_cast<int64_t>(od) * oh * ow;
  int64_t row = 0;
  for (int c = 0; c < C; ++c)
    for (int zk = 0; zk < kd; ++zk)
      for (int yk = 0; yk < kh; ++yk)
        for (int xk = 0; xk < kw; ++xk, ++row) {
          const T* src = cols + row * M;
          for (int z = 0; z < od; ++z) {
            int iz = z * stride - pad + zk;
            if (iz < 0 || iz >= D) continue;
            for (int y = 0; y < oh; ++y) {
              int iy = y * stride - pad + yk;
              if (iy < 0 || iy >= H) continue;
              const T* s = src + (static_cast<int64_t>(z) * oh + y) * ow;
              T* dst = x + (static_cast<int64_t>(c) * D + iz) * H * W + static_cast<int64_t>(iy) * W;
              for (int xo = 0; xo < ow; ++xo) {
                int ix = xo * stride - pad + xk;
                if (ix >= 0 && ix < W) dst[ix] += s[xo];
              }
            }
          }
        }
}

}  // namespace detail

// x [N,C,D,H,W] * w [O,C,kd,kh,kw] + b [O], zero padding.
template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride, int pad) {
  if (x.rank() != 5 || w.rank() != 5)
    fail("conv3d: expected x[N,C,D,H,W] and w[O,C,kD,kH,kW], got x" + shape_str(x.shape()) +
         " w" + shape_str(w.shape()));
  if (x.dim(1) != w.dim(1))
    fail("conv3d: input channels " + shape_str(x.shape()) + " do not match weight " +
         shape_str(w.shape()));
  if (b.rank() != 1 || b.dim(0) != w.dim(0))
    fail("conv3d: bias " + shape_str(b.shape()) + " does not match weight " + shape_str(w.shape()));
  if (stride < 1) fail("conv3d: stride must be >= 1");
  if (pad < 0) fail("conv3d: padding must be >= 0");

  int N = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
  int O = w.dim(0), kd = w.dim(2), kh = w.dim(3), kw = w.dim(4);
  int od = detail::conv_out_extent(D, kd, stride, pad, "conv3d");
  int oh = detail::conv_out_extent(H, kh, stride, pad, "conv3d");
  int ow = detail::conv_out_extent(W, kw, stride, pad, "conv3d");

  int64_t K = static_cast<int64_t>(C) * kd * kh * kw;
  int64_t M = static_cast<int64_t>(od) * oh * ow;
  int64_t in_vol = static_cast<int64_t>(C) * D * H * W;

  std::vector<T> cols(K * M);
  std::vector<T> out(static_cast<size_t>(N) * O * M);
  for (int n = 0; n < N; ++n) {
    detail::im2col(x.value().data() + n * in_vol, C, D, H, W, kd, kh, kw, stride, pad, od, oh, ow,
                   cols.data());
    // out[n] = w (O x K) * cols (K x M) + b
    for (int o = 0; o < O; ++o) {
      T* orow = out.data() + (static_cast<int64_t>(n) * O + o) * M;
      std::fill_n(orow, M, b.value()[o]);
      const T* wrow = w.value().data() + static_cast<int64_t>(o) * K;
      for (int64_t k = 0; k < K; ++k) {
        T a = wrow[k];
        if (a == T(0)) continue;
        const T* crow = cols.data() + k * M;
        for (int64_t m = 0; m < M; ++m) orow[m] += a * crow[m];
      }
    }
  }

  auto xn = x.node(), wn = w.node(), bn = b.node();
  auto back = [xn, wn, bn, N, C, D, H, W, O, kd, kh, kw, stride, pad, od, oh, ow, K, M,
               in_vol](TensorNode<T>& node) {
    std::vector<T> cols(K * M);
    std::vector<T> gcols;
    if (xn->tracked) gcols.resize(K * M);
    for (int n = 0; n < N; ++n) {
      const T* gy = node.grad.data() + static_cast<int64_t>(n) * O * M;
      if (wn->tracked || xn->tracked)
        detail::im2col(xn->value.data() + n * in_vol, C, D, H, W, kd, kh, kw, stride, pad, od, oh,
                       ow, cols.data());
      if (bn->tracked)
        for (int o = 0; o < O; ++o) {
          T acc = T(0);
          for (int64_t m = 0; m < M; ++m) acc += gy[static_cast<int64_t>(o) * M + m];
          bn->grad[o] += acc;
        }
      if (wn->tracked)
        for (int o = 0; o < O; ++o) {
          const T* grow = gy + static_cast<int64_t>(o) * M;
          for (int64_t k = 0; k < K; ++k) {
            const T* crow = cols.data() + k * M;
            T acc = T(0);
            for (int64_t m = 0; m < M; ++m) acc += grow[m] * crow[m];
            wn->grad[static_cast<int64_t>(o) * K + k] += acc;
          }
        }
      if (xn->tracked) {
        std::fill(gcols.begin(), gcols.end(), T(0));
        for (int o = 0; o < O; ++o) {
          const T* grow = gy + static_cast<int64_t>(o) * M;
          const T* wrow = wn->value.data() + static_cast<int64_t>(o) * K;
          for (int64_t k = 0; k < K; ++k) {
            T a = wrow[k];
            if (a == T(0)) continue;
            T* gc = gcols.data() + k * M;
            for (int64_t m = 0; m < M; ++m) gc[m] += a * grow[m];
          }
        }
        detail::col2im_add(gcols.data(), C, D, H, W, kd, kh, kw, stride, pad, od, oh, ow,
                           xn->grad.data() + n * in_vol);
      }
    }
  };
  return make_op_result<T>({N, O, od, oh, ow}, std::move(out), {xn, wn, bn}, std::move(back));
}

enum class PoolKind { avg, max };

// Unpadded pooling with cubic window `kernel` and the given stride.
template <typename T>
Tensor<T> pool3d(const Tensor<T>& x, PoolKind kind, int kernel, int stride) {
  if (x.rank() != 5) fail("pool3d: expected [N,C,D,H,W], got " + shape_str(x.shape()));
  if (kernel < 1 || stride < 1) fail("pool3d: kernel and stride must be >= 1");
  int N = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
  if (kernel > D || kernel > H || kernel > W)
    fail("pool3d: kernel " + std::to_string(kernel) + " exceeds spatial extent of " +
         shape_str(x.shape()));
  int od = (D - kernel) / stride + 1, oh = (H - kernel) / stride + 1, ow = (W - kernel) / stride + 1;

  int64_t out_sz = static_cast<int64_t>(N) * C * od * oh * ow;
  std::vector<T> out(out_sz);
  std::vector<int64_t> arg;
  if (kind == PoolKind::max) arg.resize(out_sz);
  const T* xv = x.value().data();
  T invk = T(1) / static_cast<T>(static_cast<int64_t>(kernel) * kernel * kernel);
  int64_t o = 0;
  for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
    const T* plane = xv + nc * D * H * W;
    for (int z = 0; z < od; ++z)
      for (int y = 0; y < oh; ++y)
        for (int xo = 0; xo < ow; ++xo, ++o) {
          if (kind == PoolKind::avg) {
            T acc = T(0);
            for (int dz = 0; dz < kernel; ++dz)
              for (int dy = 0; dy < kernel; ++dy)
                for (int dx = 0; dx < kernel; ++dx)
                  acc += plane[(static_cast<int64_t>(z * stride + dz) * H + y * stride + dy) * W +
                               xo * stride + dx];
            out[o] = acc * invk;
          } else {
            T best = plane[(static_cast<int64_t>(z * stride) * H + y * stride) * W + xo * stride];
            int64_t bi = nc * D * H * W +
                         (static_cast<int64_t>(z * stride) * H + y * stride) * W + xo * stride;
            for (int dz = 0; dz < kernel; ++dz)
              for (int dy = 0; dy < kernel; ++dy)
                for (int dx = 0; dx < kernel; ++dx) {
                  int64_t idx = nc * D * H * W +
                                (static_cast<int64_t>(z * stride + dz) * H + y * stride + dy) * W +
                                xo * stride + dx;
                  if (xv[idx] > best) {
                    best = xv[idx];
                    bi = idx;
                  }
                }
            out[o] = best;
            arg[o] = bi;
          }
        }
  }

  auto xn = x.node();
  std::function<void(TensorNode<T>&)> back;
  if (kind == PoolKind::avg) {
    back = [xn, N, C, D, H, W, od, oh, ow, kernel, stride, invk](TensorNode<T>& node) {
      int64_t o = 0;
      for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
        T* gplane = xn->grad.data() + nc * D * H * W;
        for (int z = 0; z < od; ++z)
          for (int y = 0; y < oh; ++y)
            for (int xo = 0; xo < ow; ++xo, ++o) {
              T g = node.grad[o] * invk;
              for (int dz = 0; dz < kernel; ++dz)
                for (int dy = 0; dy < kernel; ++dy)
                  for (int dx = 0; dx < kernel; ++dx)
                    gplane[(static_cast<int64_t>(z * stride + dz) * H + y * stride + dy) * W +
                           xo * stride + dx] += g;
            }
      }
    };
  } else {
    back = [xn, arg](TensorNode<T>& node) {
      for (size_t i = 0; i < arg.size(); ++i) xn->grad[arg[i]] += node.grad[i];
    };
  }
  return make_op_result<T>({N, C, od, oh, ow}, std::move(out), {xn}, std::move(back));
}

// Reduces all spatial dims to 1 (window = the whole volume).
template <typename T>
Tensor<T> global_pool3d(const Tensor<T>& x, PoolKind kind) {
  if (x.rank() != 5) fail("global_pool3d: expected [N,C,D,H,W], got " + shape_str(x.shape()));
  int N = x.dim(0), C = x.dim(1);
  int64_t V = static_cast<int64_t>(x.dim(2)) * x.dim(3) * x.dim(4);
  std::vector<T> out(static_cast<size_t>(N) * C);
  std::vector<int64_t> arg(kind == PoolKind::max ? out.size() : 0);
  const T* xv = x.value().data();
  for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
    const T* p = xv + nc * V;
    if (kind == PoolKind::avg) {
      T acc = T(0);
      for (int64_t i = 0; i < V; ++i) acc += p[i];
      out[nc] = acc / static_cast<T>(V);
    } else {
      T best = p[0];
      int64_t bi = 0;
      for (int64_t i = 1; i < V; ++i)
        if (p[i] > best) {
          best = p[i];
          bi = i;
        }
      out[nc] = best;
      arg[nc] = nc * V + bi;
    }
  }
  auto xn = x.node();
  std::function<void(TensorNode<T>&)> back;
  if (kind == PoolKind::avg) {
    back = [xn, V](TensorNode<T>& node) {
      for (size_t nc = 0; nc < node.grad.size(); ++nc) {
        T g = node.grad[nc] / static_cast<T>(V);
        T* gp = xn->grad.data() + nc * V;
        for (int64_t i = 0; i < V; ++i) gp[i] += g;
      }
    };
  } else {
    back = [xn, arg](TensorNode<T>& node) {
      for (size_t i = 0; i < arg.size(); ++i) xn->grad[arg[i]] += node.grad[i];
    };
  }
  return make_op_result<T>({N, C, 1, 1, 1}, std::move(out), {xn}, std::move(back));
}

// Nearest-neighbor upsampling by an integer factor on all spatial dims.
template <typename T>
Tensor<T> upsample3d(const Tensor<T>& x, int factor) {
  if (x.rank() != 5) fail("upsample3d: expected [N,C,D,H,W], got " + shape_str(x.shape()));
  if (factor < 1) fail("upsample3d: factor must be >= 1");
  int N = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
  int od = D * factor, oh = H * factor, ow = W * factor;
  std::vector<T> out(static_cast<size_t>(N) * C * od * oh * ow);
  const T* xv = x.value().data();
  for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
    const T* p = xv + nc * D * H * W;
    T* q = out.data() + nc * od * oh * ow;
    for (int z = 0; z < od; ++z)
      for (int y = 0; y < oh; ++y)
        for (int xo = 0; xo < ow; ++xo)
          q[(static_cast<int64_t>(z) * oh + y) * ow + xo] =
              p[(static_cast<int64_t>(z / factor) * H + y / factor) * W + xo / factor];
  }
  auto xn = x.node();
  return make_op_result<T>(
      {N, C, od, oh, ow}, std::move(out), {xn},
      [xn, N, C, D, H, W, od, oh, ow, factor](TensorNode<T>& node) {
        for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
          T* gp = xn->grad.data() + nc * D * H * W;
          const T* gq = node.grad.data() + nc * od * oh * ow;
          for (int z = 0; z < od; ++z)
            for (int y = 0; y < oh; ++y)
              for (int xo = 0; xo < ow; ++xo)
                gp[(static_cast<int64_t>(z / factor) * H + y / factor) * W + xo / factor] +=
                    gq[(static_cast<int64_t>(z) * oh + y) * ow + xo];
        }
      });
}

}  // namespace csf

#endif  // CSFNET_CONV_HPP
