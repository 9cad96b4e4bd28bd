#ifndef CSFNET_SPATIAL_HPP
#define CSFNET_SPATIAL_HPP

#include <array>
#include <vector>

#include "csfnet/nn.hpp"

namespace csf {

struct BackboneConfig {
  std::vector<int> stage_channels = {8, 16, 32};
  int blocks_per_stage = 1;
  int cbam_reduction = 4;
  int spatial_kernel = 7;

  void validate() const {
    if (stage_channels.empty()) fail("BackboneConfig: stage_channels must be non-empty");
    for (int c : stage_channels) {
      if (c < 1) fail("BackboneConfig: non-positive channel count");
      if (c < cbam_reduction)
        fail("BackboneConfig: cbam_reduction " + std::to_string(cbam_reduction) +
             " exceeds channel count " + std::to_string(c));
    }
    if (blocks_per_stage < 1) fail("BackboneConfig: blocks_per_stage must be >= 1");
    if (spatial_kernel % 2 == 0 || spatial_kernel < 1)
      fail("BackboneConfig: spatial_kernel must be odd, got " + std::to_string(spatial_kernel));
  }

  int out_channels() const { return stage_channels.back(); }

  // Stride-2 conv with pad 1 / kernel 3 maps d -> ceil(d/2).
  std::array<int, 3> out_spatial(std::array<int, 3> in) const {
    for (size_t s = 0; s < stage_channels.size(); ++s)
      for (auto& d : in) d = (d + 1) / 2;
    return in;
  }
};

// sigmoid(MLP(avgpool) + MLP(maxpool)) with a shared bottleneck MLP.
template <typename T>
struct ChannelAttention {
  LinearLayer<T> fc1, fc2;
  int channels = 0;

  ChannelAttention() = default;
  ChannelAttention(const std::string& name, int C, int reduction, Rng& rng) : channels(C) {
    if (C < reduction)
      fail("ChannelAttention: channels " + std::to_string(C) + " < reduction " +
           std::to_string(reduction));
    fc1 = LinearLayer<T>(name + ".fc1", C, C / reduction, rng);
    fc2 = LinearLayer<T>(name + ".fc2", C / reduction, C, rng);
  }

  Tensor<T> operator()(const Tensor<T>& feat) const {
    int N = feat.dim(0), C = feat.dim(1);
    Tensor<T> avg = reshape(global_pool3d(feat, PoolKind::avg), {N, C});
    Tensor<T> mx = reshape(global_pool3d(feat, PoolKind::max), {N, C});
    Tensor<T> a = fc2(relu(fc1(avg)));
    Tensor<T> m = fc2(relu(fc1(mx)));
    return reshape(sigmoid(add(a, m)), {N, C, 1, 1, 1});
  }

  void params(ParamList<T>& out) {
    fc1.params(out);
    fc2.params(out);
  }
};

// sigmoid(conv(concat(channel-mean, channel-max))) over the spatial map.
template <typename T>
struct SpatialAttention {
  Conv3dLayer<T> conv;

  SpatialAttention() = default;
  SpatialAttention(const std::string& name, int kernel, Rng& rng) {
    if (kernel % 2 == 0) fail("SpatialAttention: kernel must be odd, got " + std::to_string(kernel));
    conv = Conv3dLayer<T>(name + ".conv", 2, 1, kernel, 1, (kernel - 1) / 2, rng);
  }

  Tensor<T> operator()(const Tensor<T>& feat) const {
    Tensor<T> cm = mean_axis(feat, 1, true);
    Tensor<T> cx = max_axis(feat, 1, true);
    return sigmoid(conv(concat(cm, cx, 1)));
  }

  void params(ParamList<T>& out) { conv.params(out); }
};

template <typename T>
struct CbamBlock {
  ChannelAttention<T> channel;
  SpatialAttention<T> spatial;

  CbamBlock() = default;
  CbamBlock(const std::string& name, int C, int reduction, int kernel, Rng& rng)
      : channel(name + ".ca", C, reduction, rng), spatial(name + ".sa", kernel, rng) {}

  Tensor<T> operator()(const Tensor<T>& feat) const {
    Tensor<T> refined = mul(feat, channel(feat));
    return mul(refined, spatial(refined));
  }

  void params(ParamList<T>& out) {
    channel.params(out);
    spatial.params(out);
  }
};

// Two 3x3x3 convs with an identity shortcut; relu after the sum.
template <typename T>
struct ResidualBlock {
  Conv3dLayer<T> conv1, conv2;

  ResidualBlock() = default;
  ResidualBlock(const std::string& name, int C, Rng& rng)
      : conv1(name + ".conv1", C, C, 3, 1, 1, rng), conv2(name + ".conv2", C, C, 3, 1, 1, rng) {}

  Tensor<T> operator()(const Tensor<T>& x) const {
    return relu(add(conv2(relu(conv1(x))), x));
  }

  void params(ParamList<T>& out) {
    conv1.params(out);
    conv2.params(out);
  }
};

// Stem conv, then per stage: residual blocks -> CBAM -> stride-2 downsample.
// Both timepoints run through one instance (shared weights).
template <typename T>
struct SpatialExtractor {
  BackboneConfig config;
  Conv3dLayer<T> stem;
  struct Stage {
    std::vector<ResidualBlock<T>> blocks;
    CbamBlock<T> cbam;
    Conv3dLayer<T> down;
  };
  std::vector<Stage> stages;

  SpatialExtractor() = default;
  SpatialExtractor(const std::string& name, const BackboneConfig& cfg, Rng& rng) : config(cfg) {
    cfg.validate();
    stem = Conv3dLayer<T>(name + ".stem", 1, cfg.stage_channels[0], 3, 1, 1, rng);
    for (size_t s = 0; s < cfg.stage_channels.size(); ++s) {
      Stage st;
      int C = cfg.stage_channels[s];
      int Cn = s + 1 < cfg.stage_channels.size() ? cfg.stage_channels[s + 1] : C;
      for (int bIdx = 0; bIdx < cfg.blocks_per_stage; ++bIdx)
        st.blocks.emplace_back(name + ".s" + std::to_string(s) + ".b" + std::to_string(bIdx), C, rng);
      st.cbam = CbamBlock<T>(name + ".s" + std::to_string(s) + ".cbam", C, cfg.cbam_reduction,
                             cfg.spatial_kernel, rng);
      st.down = Conv3dLayer<T>(name + ".s" + std::to_string(s) + ".down", C, Cn, 3, 2, 1, rng);
      stages.push_back(std::move(st));
    }
  }

  Tensor<T> operator()(const Tensor<T>& volume) const {
    if (volume.rank() != 5 || volume.dim(1) != 1)
      fail("SpatialExtractor: expected [N,1,D,H,W], got " + shape_str(volume.shape()));
    Tensor<T> h = stem(volume);
    for (const auto& st : stages) {
      for (const auto& blk : st.blocks) h = blk(h);
      h = st.cbam(h);
      h = st.down(h);
    }
    return h;
  }

  void params(ParamList<T>& out) {
    stem.params(out);
    for (auto& st : stages) {
      for (auto& blk : st.blocks) blk.params(out);
      st.cbam.params(out);
      st.down.params(out);
    }
  }
};

}  // namespace csf

#endif  // CSFNET_SPATIAL_HPP
