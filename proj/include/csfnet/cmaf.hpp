#ifndef CSFNET_CMAF_HPP
#define CSFNET_CMAF_HPP

#include "csfnet/data.hpp"
#include "csfnet/nn.hpp"

namespace csf {

inline constexpr int kClinicalFields = 4;

// Per-field normalization to a scalar in roughly [-1, 1].
inline std::array<double, kClinicalFields> normalize_clinical(const ClinicalRecord& r) {
  r.validate();
  return {(r.age - 55.0) / 10.0,
          r.sex == Sex::female ? 1.0 : -1.0,
          r.smoking == Smoking::current ? 1.0 : -1.0,
          r.screening == Screening::positive ? 1.0 : -1.0};
}

// Tabular "text encoder": each covariate becomes one token via a learned
// per-field affine embedding of its normalized scalar.
template <typename T>
struct ClinicalEncoder {
  Param<T> w, b;  // [4,E] each
  int embed = 16;

  ClinicalEncoder() = default;
  ClinicalEncoder(const std::string& name, int embed_width, Rng& rng) : embed(embed_width) {
    w = Param<T>(name + ".w", Tensor<T>({kClinicalFields, embed}, true));
    b = Param<T>(name + ".b", Tensor<T>({kClinicalFields, embed}, true));
    xavier_fill(w.tensor, 1, embed, rng);
  }

  // -> [N, 4, E]
  Tensor<T> operator()(const std::vector<ClinicalRecord>& records) const {
    int N = static_cast<int>(records.size());
    if (N == 0) fail("ClinicalEncoder: empty batch");
    std::vector<T> scalars(static_cast<size_t>(N) * kClinicalFields);
    for (int n = 0; n < N; ++n) {
      auto v = normalize_clinical(records[n]);
      for (int f = 0; f < kClinicalFields; ++f)
        scalars[static_cast<size_t>(n) * kClinicalFields + f] = static_cast<T>(v[f]);
    }
    Tensor<T> s = Tensor<T>::from({N, kClinicalFields, 1}, std::move(scalars));
    return add(mul(s, w.tensor), b.tensor);  // broadcast [N,4,1]*[4,E]+[4,E]
  }

  void params(ParamList<T>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

template <typename T>
struct AttentionMaps {
  Tensor<T> s_scores;  // [N,S,T]
  Tensor<T> t_scores;  // [N,T,S]
  Tensor<T> beta;      // [N,T,S], rows over S sum to 1
  Tensor<T> rho;       // [N,S,T], rows over T sum to 1
};

template <typename T>
struct CmafOutput {
  AttentionMaps<T> maps;
  Tensor<T> attended_image;  // [N,S,C]
  Tensor<T> attended_text;   // [N,T,C]
};

// Bidirectional single-head cross attention between image spatial positions
// and clinical tokens.
template <typename T>
struct CrossModalAttention {
  LinearLayer<T> q1, k1, v1;  // image side: C -> A, C -> A, C -> C
  LinearLayer<T> q2, k2, v2;  // clinical side: E -> A, E -> A, E -> C
  int channels = 0, embed = 0, attn = 32;

  CrossModalAttention() = default;
  CrossModalAttention(const std::string& name, int C, int E, int A, Rng& rng)
      : channels(C), embed(E), attn(A) {
    if (A < 1) fail("CrossModalAttention: attention width must be >= 1");
    q1 = LinearLayer<T>(name + ".q1", C, A, rng);
    k1 = LinearLayer<T>(name + ".k1", C, A, rng);
    v1 = LinearLayer<T>(name + ".v1", C, C, rng);
    q2 = LinearLayer<T>(name + ".q2", E, A, rng);
    k2 = LinearLayer<T>(name + ".k2", E, A, rng);
    v2 = LinearLayer<T>(name + ".v2", E, C, rng);
  }

  // x: [N,S,C] flattened image features, y: [N,T,E] clinical tokens.
  CmafOutput<T> operator()(const Tensor<T>& x, const Tensor<T>& y) const {
    if (x.rank() != 3 || x.dim(2) != channels)
      fail("CrossModalAttention: image features " + shape_str(x.shape()) + ", expected [N,S," +
           std::to_string(channels) + "]");
    if (y.rank() != 3 || y.dim(2) != embed)
      fail("CrossModalAttention: clinical features " + shape_str(y.shape()) + ", expected [N,T," +
           std::to_string(embed) + "]");
    CmafOutput<T> out;
    // s_ij = q1(x_i)^T k2(y_j); beta normalizes over spatial positions i.
    out.maps.s_scores = bmm_nt(q1.tokens(x), k2.tokens(y));           // [N,S,T]
    out.maps.beta = softmax(transpose12(out.maps.s_scores), 2);       // [N,T,S]
    out.attended_text = bmm(out.maps.beta, v1.tokens(x));             // [N,T,C]
    // t_ij = q2(y_i)^T k1(x_j); rho normalizes over clinical tokens i.
    out.maps.t_scores = bmm_nt(q2.tokens(y), k1.tokens(x));           // [N,T,S]
    out.maps.rho = softmax(transpose12(out.maps.t_scores), 2);        // [N,S,T]
    out.attended_image = bmm(out.maps.rho, v2.tokens(y));             // [N,S,C]
    return out;
  }

  void params(ParamList<T>& out) {
    q1.params(out);
    k1.params(out);
    v1.params(out);
    q2.params(out);
    k2.params(out);
    v2.params(out);
  }
};

// Two fully connected layers over the pooled combined features. The final
// layer is zero-initialized so a fresh model predicts (0.5, 0.5).
template <typename T>
struct ClassifierHead {
  LinearLayer<T> fc1, fc2;

  ClassifierHead() = default;
  ClassifierHead(const std::string& name, int in_dim, int hidden, Rng& rng) {
    fc1 = LinearLayer<T>(name + ".fc1", in_dim, hidden, rng);
    fc2 = LinearLayer<T>(name + ".fc2", hidden, 2, rng, /*zero_init=*/true);
  }

  Tensor<T> operator()(const Tensor<T>& features) const { return fc2(relu(fc1(features))); }

  // Residual combine of attended image features onto X, mean-pooled over
  // positions/tokens, then concatenated.
  Tensor<T> classify(const Tensor<T>& attended_image, const Tensor<T>& attended_text,
                     const Tensor<T>& x) const {
    Tensor<T> img = mean_axis(add(attended_image, x), 1);  // [N,C]
    Tensor<T> txt = mean_axis(attended_text, 1);           // [N,C]
    return (*this)(concat(img, txt, 1));
  }

  void params(ParamList<T>& out) {
    fc1.params(out);
    fc2.params(out);
  }
};

}  // namespace csf

#endif  // CSFNET_CMAF_HPP
