#ifndef CSFNET_RNG_HPP
#define CSFNET_RNG_HPP

#include <cstdint>
#include <random>

namespace csf {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Per-item seed derivation: master seed xor'd with the item index, hashed.
inline uint64_t derive_seed(uint64_t master, uint64_t index) {
  return splitmix64(master ^ splitmix64(index));
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(eng_);
  }
  double normal(double mean, double sd) {
    return std::normal_distribution<double>(mean, sd)(eng_);
  }
  double lognormal(double mu, double sigma) {
    return std::exp(normal(mu, sigma));
  }
  bool bernoulli(double p) { return std::bernoulli_distribution(p)(eng_); }
  int uniform_int(int lo, int hi) {  // inclusive
    return std::uniform_int_distribution<int>(lo, hi)(eng_);
  }
  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace csf

#endif  // CSFNET_RNG_HPP
