#ifndef CSFNET_DATA_HPP
#define CSFNET_DATA_HPP

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "csfnet/tensor.hpp"

namespace csf {

enum class Sex { male, female };
enum class Smoking { current, former };
enum class Screening { negative, positive };
enum class Split { train, val, test };

struct ClinicalRecord {
  int age = 0;  // 45..80
  Sex sex = Sex::male;
  Smoking smoking = Smoking::former;
  Screening screening = Screening::negative;

  void validate() const {
    if (age < 45 || age > 80)
      fail("ClinicalRecord: age " + std::to_string(age) + " outside [45,80]");
  }
};

struct FollowupCase {
  std::string case_id;
  std::array<int, 3> shape{};  // D,H,W
  std::vector<float> t0_volume;
  std::vector<float> t1_volume;
  ClinicalRecord clinical;
  int label = 0;  // 0 benign, 1 malignant
  Split split = Split::train;
};

struct GeneratorConfig {
  int n_cases = 100;
  uint64_t seed = 0;
  std::array<int, 3> shape = {8, 16, 16};
  double malignant_fraction = 0.4;
  // Strength of the clinical-covariate / label correlation, in [0,1].
  double leak = 0.6;
  // Log-space growth of the nodule radius between timepoints.
  double growth_mu_malignant = 0.45;
  double growth_sigma_malignant = 0.15;
  double growth_mu_benign = 0.02;
  double growth_sigma_benign = 0.10;
};

std::vector<FollowupCase> generate_dataset(const GeneratorConfig& cfg);

// Label-stratified, seed-deterministic split assignment.
// fractions = {train, val, test}, must sum to 1 (within 1e-9).
void split_dataset(std::vector<FollowupCase>& cases, std::array<double, 3> fractions,
                   uint64_t seed);

// Bit-exact binary volume format + JSON manifest (paths relative to manifest).
void write_dataset(const std::vector<FollowupCase>& cases, const std::string& manifest_path,
                   const std::string& data_dir, const std::array<int, 3>& shape, uint64_t seed);
std::vector<FollowupCase> read_dataset(const std::string& manifest_path);
uint64_t read_dataset_seed(const std::string& manifest_path);

// Single-tensor records: 16-byte header, three LE u32 dims, LE float32
// payload, trailing CRC32 of the payload.
void write_volume(const std::string& path, const std::array<int, 3>& dims,
                  const std::vector<float>& data);
std::vector<float> read_volume(const std::string& path, std::array<int, 3>& dims);
void append_volume_record(std::ostream& os, const std::array<int, 3>& dims,
                          const std::vector<float>& data);
std::vector<float> read_volume_record(std::istream& is, std::array<int, 3>& dims);

std::string to_string(Sex v);
std::string to_string(Smoking v);
std::string to_string(Screening v);
std::string to_string(Split v);
Sex sex_from_string(const std::string& s);
Smoking smoking_from_string(const std::string& s);
Screening screening_from_string(const std::string& s);
Split split_from_string(const std::string& s);

// Read-only view over loaded cases that counts volume accesses per timepoint,
// so tests can assert an ablation row never touches the other timepoint.
class Dataset {
 public:
  explicit Dataset(std::vector<FollowupCase> cases) : cases_(std::move(cases)) {}

  size_t size() const { return cases_.size(); }
  const FollowupCase& meta(size_t i) const { return cases_.at(i); }
  const std::vector<float>& t0(size_t i) const {
    ++t0_reads_;
    return cases_.at(i).t0_volume;
  }
  const std::vector<float>& t1(size_t i) const {
    ++t1_reads_;
    return cases_.at(i).t1_volume;
  }
  int64_t t0_reads() const { return t0_reads_; }
  int64_t t1_reads() const { return t1_reads_; }
  void reset_counters() const { t0_reads_ = t1_reads_ = 0; }

  std::vector<size_t> indices(Split s) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < cases_.size(); ++i)
      if (cases_[i].split == s) out.push_back(i);
    return out;
  }

 private:
  std::vector<FollowupCase> cases_;
  mutable int64_t t0_reads_ = 0;
  mutable int64_t t1_reads_ = 0;
};

}  // namespace csf

#endif  // CSFNET_DATA_HPP
