#ifndef CSFNET_TRF_HPP
#define CSFNET_TRF_HPP

#include "csfnet/nn.hpp"

namespace csf {

// Temporal residual fusion: refine the concatenated timepoints through an
// upsample / average-pool / conv round-trip, then mix with a learnable
// sigmoid-gated residual toward the later timepoint.
template <typename T>
struct TemporalResidualFusion {
  Param<T> lambda0, lambda1;  // scalar gates, init 0 -> sigmoid 0.5
  Conv3dLayer<T> fuse_conv;   // 2C -> C, kernel 3, pad 1
  int upsample_factor = 2;
  int pool_kernel = 2;

  TemporalResidualFusion() = default;
  TemporalResidualFusion(const std::string& name, int channels, Rng& rng, int factor = 2,
                         int pool = 2)
      : upsample_factor(factor), pool_kernel(pool) {
    if (factor < 1 || pool < 1) fail("TemporalResidualFusion: factor and pool must be >= 1");
    lambda0 = Param<T>(name + ".lambda0", Tensor<T>::scalar(T(0), true));
    lambda1 = Param<T>(name + ".lambda1", Tensor<T>::scalar(T(0), true));
    fuse_conv = Conv3dLayer<T>(name + ".fuse", 2 * channels, channels, 3, 1, 1, rng);
  }

  // conv3d(avgpool(upsample(t0 (+) t1)))
  Tensor<T> refine(const Tensor<T>& t0, const Tensor<T>& t1) const {
    if (t0.shape() != t1.shape())
      fail("TemporalResidualFusion: timepoint shapes differ, " + shape_str(t0.shape()) + " vs " +
           shape_str(t1.shape()));
    Tensor<T> cat = concat(t0, t1, 1);
    Tensor<T> up = upsample3d(cat, upsample_factor);
    Tensor<T> pooled = pool3d(up, PoolKind::avg, pool_kernel, pool_kernel);
    return fuse_conv(pooled);
  }

  // sigmoid(l0) * f_feat + sigmoid(l1) * t1
  Tensor<T> fuse(const Tensor<T>& f_feat, const Tensor<T>& t1) const {
    if (f_feat.shape() != t1.shape())
      fail("TemporalResidualFusion: fused shape " + shape_str(f_feat.shape()) +
           " does not match t1 " + shape_str(t1.shape()));
    return add(mul(sigmoid(lambda0.tensor), f_feat), mul(sigmoid(lambda1.tensor), t1));
  }

  Tensor<T> operator()(const Tensor<T>& t0, const Tensor<T>& t1) const {
    return fuse(refine(t0, t1), t1);
  }

  void params(ParamList<T>& out) {
    out.push_back(&lambda0);
    out.push_back(&lambda1);
    fuse_conv.params(out);
  }
};

}  // namespace csf

#endif  // CSFNET_TRF_HPP
