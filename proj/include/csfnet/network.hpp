#ifndef CSFNET_NETWORK_HPP
#define CSFNET_NETWORK_HPP

#include <optional>

#include "csfnet/cmaf.hpp"
#include "csfnet/spatial.hpp"
#include "csfnet/trf.hpp"

namespace csf {

struct AblationFlags {
  bool use_t0 = true;
  bool use_t1 = true;
  bool use_clinical = true;
  bool use_cmaf = true;
  bool use_trf = true;

  void validate() const {
    if (!use_t0 && !use_t1) fail("AblationFlags: at least one image branch must be enabled");
  }
  bool both_timepoints() const { return use_t0 && use_t1; }
};

struct NetworkConfig {
  BackboneConfig backbone;
  AblationFlags flags;
  int clinical_embed = 16;
  int attention_width = 32;
  int head_hidden = 64;
  int trf_upsample = 2;
  int trf_pool = 2;

  void validate() const {
    backbone.validate();
    flags.validate();
    if (clinical_embed < 1 || attention_width < 1 || head_hidden < 1)
      fail("NetworkConfig: widths must be >= 1");
  }

  // Channel count of the image feature map entering the fusion/head.
  int image_channels() const {
    int c = backbone.out_channels();
    return (flags.both_timepoints() && !flags.use_trf) ? 2 * c : c;
  }
  bool cmaf_active() const { return flags.use_clinical && flags.use_cmaf; }
  int head_input_dim() const {
    if (cmaf_active()) return 2 * image_channels();
    if (flags.use_clinical) return image_channels() + clinical_embed;
    return image_channels();
  }
};

template <typename T>
struct ForwardResult {
  Tensor<T> logits;                     // [N,2]
  std::optional<CmafOutput<T>> cmaf;    // present when the CMAF path ran
};

// The full model. Ablation flags rewire the graph at construction time:
// the backbone is shared across timepoints, TRF fuses them, CMAF attends
// between image positions and clinical tokens, and the head classifies.
template <typename T>
class CsfNet {
 public:
  CsfNet(const NetworkConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg.validate();
    Rng rng(derive_seed(seed, 0xC5F));
    backbone_ = SpatialExtractor<T>("backbone", cfg.backbone, rng);
    if (cfg.flags.both_timepoints() && cfg.flags.use_trf)
      trf_ = TemporalResidualFusion<T>("trf", cfg.backbone.out_channels(), rng, cfg.trf_upsample,
                                       cfg.trf_pool);
    if (cfg.flags.use_clinical)
      encoder_ = ClinicalEncoder<T>("clinical", cfg.clinical_embed, rng);
    if (cfg.cmaf_active())
      cmaf_ = CrossModalAttention<T>("cmaf", cfg.image_channels(), cfg.clinical_embed,
                                     cfg.attention_width, rng);
    head_ = ClassifierHead<T>("head", cfg.head_input_dim(), cfg.head_hidden, rng);
  }

  const NetworkConfig& config() const { return cfg_; }

  // Null pointers are allowed for branches the flags disable.
  ForwardResult<T> forward(const Tensor<T>* t0, const Tensor<T>* t1,
                           const std::vector<ClinicalRecord>* clinical) const {
    const auto& f = cfg_.flags;
    if (f.use_t0 && !t0) fail("CsfNet::forward: t0 volumes required by configuration");
    if (f.use_t1 && !t1) fail("CsfNet::forward: t1 volumes required by configuration");
    if (f.use_clinical && !clinical)
      fail("CsfNet::forward: clinical records required by configuration");

    Tensor<T> feat;
    if (f.both_timepoints()) {
      Tensor<T> f0 = backbone_(*t0);
      Tensor<T> f1 = backbone_(*t1);
      feat = f.use_trf ? (*trf_)(f0, f1) : concat(f0, f1, 1);
    } else {
      feat = backbone_(f.use_t1 ? *t1 : *t0);
    }

    int N = feat.dim(0), C = feat.dim(1);
    int S = feat.dim(2) * feat.dim(3) * feat.dim(4);
    Tensor<T> x = transpose12(reshape(feat, {N, C, S}));  // [N,S,C]

    ForwardResult<T> out;
    if (cfg_.cmaf_active()) {
      Tensor<T> y = (*encoder_)(*clinical);
      CmafOutput<T> co = (*cmaf_)(x, y);
      out.logits = head_.classify(co.attended_image, co.attended_text, x);
      out.cmaf = std::move(co);
    } else if (f.use_clinical) {
      Tensor<T> y = (*encoder_)(*clinical);
      out.logits = head_(concat(mean_axis(x, 1), mean_axis(y, 1), 1));
    } else {
      out.logits = head_(mean_axis(x, 1));
    }
    return out;
  }

  ParamList<T> params() {
    ParamList<T> out;
    backbone_.params(out);
    if (trf_) trf_->params(out);
    if (encoder_) encoder_->params(out);
    if (cmaf_) cmaf_->params(out);
    head_.params(out);
    return out;
  }

  SpatialExtractor<T>& backbone() { return backbone_; }
  TemporalResidualFusion<T>& trf() { return *trf_; }

 private:
  NetworkConfig cfg_;
  SpatialExtractor<T> backbone_;
  std::optional<TemporalResidualFusion<T>> trf_;
  std::optional<ClinicalEncoder<T>> encoder_;
  std::optional<CrossModalAttention<T>> cmaf_;
  ClassifierHead<T> head_;
};

// Packs a batch of raw volumes into a [N,1,D,H,W] tensor.
template <typename T>
Tensor<T> batch_volumes(const std::vector<const std::vector<float>*>& vols,
                        const std::array<int, 3>& shape) {
  int N = static_cast<int>(vols.size());
  int64_t V = static_cast<int64_t>(shape[0]) * shape[1] * shape[2];
  std::vector<T> data(static_cast<size_t>(N) * V);
  for (int n = 0; n < N; ++n) {
    if (static_cast<int64_t>(vols[n]->size()) != V)
      fail("batch_volumes: volume length does not match shape");
    for (int64_t i = 0; i < V; ++i) data[n * V + i] = static_cast<T>((*vols[n])[i]);
  }
  return Tensor<T>::from({N, 1, shape[0], shape[1], shape[2]}, std::move(data));
}

}  // namespace csf

#endif  // CSFNET_NETWORK_HPP
