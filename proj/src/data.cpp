#include "csfnet/data.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "csfnet/rng.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace csf {

// ---------------------------------------------------------------------------
// enum <-> string
// ---------------------------------------------------------------------------

std::string to_string(Sex v) { return v == Sex::male ? "male" : "female"; }
std::string to_string(Smoking v) { return v == Smoking::current ? "current" : "former"; }
std::string to_string(Screening v) { return v == Screening::positive ? "positive" : "negative"; }
std::string to_string(Split v) {
  switch (v) {
    case Split::train: return "train";
    case Split::val: return "val";
    default: return "test";
  }
}

Sex sex_from_string(const std::string& s) {
  if (s == "male") return Sex::male;
  if (s == "female") return Sex::female;
  fail("invalid sex value '" + s + "'");
}
Smoking smoking_from_string(const std::string& s) {
  if (s == "current") return Smoking::current;
  if (s == "former") return Smoking::former;
  fail("invalid smoking_status value '" + s + "'");
}
Screening screening_from_string(const std::string& s) {
  if (s == "positive") return Screening::positive;
  if (s == "negative") return Screening::negative;
  fail("invalid screening_result value '" + s + "'");
}
Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  fail("invalid split value '" + s + "'");
}

// ---------------------------------------------------------------------------
// Binary volume format
//   bytes 0..3   magic "CSFV"
//   byte  4      version (1)
//   byte  5      dtype (1 = float32)
//   bytes 6..15  reserved, zero
//   3 x u32 LE   dims (D,H,W)
//   payload      row-major float32 LE
//   u32 LE       CRC32 of the payload bytes
// ---------------------------------------------------------------------------

namespace {

uint32_t crc32_update(uint32_t crc, const unsigned char* buf, size_t len) {
  static uint32_t table[256];
  static bool init = false;
  if (!init) {
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      table[i] = c;
    }
    init = true;
  }
  crc ^= 0xFFFFFFFFu;
  for (size_t i = 0; i < len; ++i) crc = table[(crc ^ buf[i]) & 0xFF] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

void put_u32le(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32le(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) fail(std::string(what) + ": truncated file");
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
         static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

}  // namespace

void append_volume_record(std::ostream& os, const std::array<int, 3>& dims,
                          const std::vector<float>& data) {
  static_assert(sizeof(float) == 4);
  char header[16] = {'C', 'S', 'F', 'V', 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  os.write(header, 16);
  for (int d : dims) put_u32le(os, static_cast<uint32_t>(d));
  os.write(reinterpret_cast<const char*>(data.data()),
           static_cast<std::streamsize>(data.size() * 4));
  uint32_t crc = crc32_update(0, reinterpret_cast<const unsigned char*>(data.data()), data.size() * 4);
  put_u32le(os, crc);
}

std::vector<float> read_volume_record(std::istream& is, std::array<int, 3>& dims) {
  char header[16];
  if (!is.read(header, 16)) fail("volume record: truncated header");
  if (std::memcmp(header, "CSFV", 4) != 0) fail("volume record: bad magic");
  if (header[4] != 1) fail("volume record: unsupported version");
  if (header[5] != 1) fail("volume record: unsupported dtype");
  int64_t n = 1;
  for (int i = 0; i < 3; ++i) {
    uint32_t d = get_u32le(is, "volume record dims");
    if (d == 0 || d > (1u << 20)) fail("volume record: invalid extent");
    dims[i] = static_cast<int>(d);
    n *= d;
  }
  std::vector<float> data(static_cast<size_t>(n));
  if (!is.read(reinterpret_cast<char*>(data.data()), n * 4))
    fail("volume record: truncated payload");
  uint32_t stored = get_u32le(is, "volume record crc");
  uint32_t actual =
      crc32_update(0, reinterpret_cast<const unsigned char*>(data.data()), data.size() * 4);
  if (stored != actual) fail("volume record: CRC mismatch");
  return data;
}

void write_volume(const std::string& path, const std::array<int, 3>& dims,
                  const std::vector<float>& data) {
  if (static_cast<int64_t>(data.size()) !=
      static_cast<int64_t>(dims[0]) * dims[1] * dims[2])
    fail("write_volume: data length does not match dims");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail("write_volume: cannot open " + path);
  append_volume_record(os, dims, data);
  if (!os) fail("write_volume: write failed for " + path);
}

std::vector<float> read_volume(const std::string& path, std::array<int, 3>& dims) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("read_volume: cannot open " + path);
  try {
    return read_volume_record(is, dims);
  } catch (const ValidationError& e) {
    fail(std::string(e.what()) + " (" + path + ")");
  }
}

// ---------------------------------------------------------------------------
// Synthetic generation
// ---------------------------------------------------------------------------

namespace {

// Gaussian blob of radius r at center c on a noisy background; the depth axis
// is scaled so the nodule stays round under anisotropic voxel counts.
void render_volume(std::vector<float>& vol, const std::array<int, 3>& shape, double cz, double cy,
                   double cx, double r, double amp, Rng& rng) {
  int D = shape[0], H = shape[1], W = shape[2];
  double az = static_cast<double>(H) / D;
  vol.resize(static_cast<size_t>(D) * H * W);
  for (auto& v : vol) v = static_cast<float>(rng.uniform(0.05, 0.25));
  double inv2r2 = 1.0 / (2.0 * r * r);
  for (int z = 0; z < D; ++z)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double dz = (z - cz) * az, dy = y - cy, dx = x - cx;
        double d2 = dz * dz + dy * dy + dx * dx;
        float& v = vol[(static_cast<int64_t>(z) * H + y) * W + x];
        v += static_cast<float>(amp * std::exp(-d2 * inv2r2));
        v = std::min(1.0f, std::max(0.0f, v));
      }
}

}  // namespace

std::vector<FollowupCase> generate_dataset(const GeneratorConfig& cfg) {
  if (cfg.n_cases < 2)
    fail("generate_dataset: need at least 2 cases, got " + std::to_string(cfg.n_cases));
  if (!(cfg.malignant_fraction > 0.0 && cfg.malignant_fraction < 1.0))
    fail("generate_dataset: malignant_fraction must lie strictly in (0,1)");
  for (int d : cfg.shape)
    if (d < 4) fail("generate_dataset: each volume extent must be >= 4");
  if (cfg.leak < 0.0 || cfg.leak > 1.0) fail("generate_dataset: leak must lie in [0,1]");

  int n_mal = static_cast<int>(std::lround(cfg.malignant_fraction * cfg.n_cases));
  n_mal = std::min(std::max(n_mal, 1), cfg.n_cases - 1);

  int D = cfg.shape[0], H = cfg.shape[1], W = cfg.shape[2];
  std::vector<FollowupCase> cases(cfg.n_cases);
  for (int i = 0; i < cfg.n_cases; ++i) {
    FollowupCase& c = cases[i];
    std::ostringstream id;
    id << "case_" << std::setw(4) << std::setfill('0') << i;
    c.case_id = id.str();
    c.shape = cfg.shape;
    c.label = i < n_mal ? 1 : 0;

    Rng rng(derive_seed(cfg.seed, static_cast<uint64_t>(i)));

    double cz = D / 2.0 + rng.uniform(-0.08, 0.08) * D;
    double cy = H / 2.0 + rng.uniform(-0.08, 0.08) * H;
    double cx = W / 2.0 + rng.uniform(-0.08, 0.08) * W;
    // Wide baseline-radius spread: absolute nodule size alone is a weak
    // malignancy cue; growth between timepoints carries the signal.
    double r0 = rng.uniform(0.10, 0.26) * std::min(H, W);
    double amp0 = rng.uniform(0.5, 0.8);
    double growth = c.label == 1
                        ? rng.lognormal(cfg.growth_mu_malignant, cfg.growth_sigma_malignant)
                        : rng.lognormal(cfg.growth_mu_benign, cfg.growth_sigma_benign);
    double r1 = r0 * growth;
    double amp1 = amp0 * rng.uniform(0.95, 1.05);
    double jz = rng.uniform(-0.5, 0.5), jy = rng.uniform(-0.5, 0.5), jx = rng.uniform(-0.5, 0.5);

    render_volume(c.t0_volume, cfg.shape, cz, cy, cx, r0, amp0, rng);
    render_volume(c.t1_volume, cfg.shape, cz + jz, cy + jy, cx + jx, r1, amp1, rng);

    // Covariates skew with the label by `leak`: informative value with
    // probability 0.5 + leak/2 for malignant, 0.5 - leak/2 for benign.
    double dir = c.label == 1 ? 1.0 : -1.0;
    double age = rng.normal(62.5 + dir * 7.5 * cfg.leak, 6.0);
    c.clinical.age = std::min(80, std::max(45, static_cast<int>(std::lround(age))));
    c.clinical.sex = rng.bernoulli(0.5) ? Sex::female : Sex::male;
    c.clinical.smoking = rng.bernoulli(0.5 + dir * cfg.leak / 2.0) ? Smoking::current : Smoking::former;
    c.clinical.screening =
        rng.bernoulli(0.5 + dir * cfg.leak / 2.0) ? Screening::positive : Screening::negative;
    c.clinical.validate();
  }
  return cases;
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

void split_dataset(std::vector<FollowupCase>& cases, std::array<double, 3> fractions,
                   uint64_t seed) {
  double total = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(total - 1.0) > 1e-9)
    fail("split_dataset: fractions sum to " + std::to_string(total) + ", expected 1");
  for (double f : fractions)
    if (f < 0) fail("split_dataset: negative fraction");

  for (int label = 0; label <= 1; ++label) {
    std::vector<size_t> idx;
    for (size_t i = 0; i < cases.size(); ++i)
      if (cases[i].label == label) idx.push_back(i);
    if (idx.empty()) fail("split_dataset: dataset has no cases of class " + std::to_string(label));

    std::mt19937_64 eng(derive_seed(seed, 0x5917 + label));
    std::shuffle(idx.begin(), idx.end(), eng);

    size_t m = idx.size();
    // floor allocation, leftovers to the largest fractional remainders
    std::array<size_t, 3> counts{};
    std::array<double, 3> rem{};
    size_t assigned = 0;
    for (int s = 0; s < 3; ++s) {
      double exact = fractions[s] * m;
      counts[s] = static_cast<size_t>(exact);
      rem[s] = exact - counts[s];
      assigned += counts[s];
    }
    while (assigned < m) {
      int best = 0;
      for (int s = 1; s < 3; ++s)
        if (rem[s] > rem[best]) best = s;
      ++counts[best];
      rem[best] = -1;
      ++assigned;
    }
    for (int s = 0; s < 3; ++s)
      if (fractions[s] > 0 && counts[s] == 0)
        fail("split_dataset: split '" + to_string(static_cast<Split>(s)) +
             "' receives no cases of class " + std::to_string(label));

    size_t k = 0;
    for (int s = 0; s < 3; ++s)
      for (size_t j = 0; j < counts[s]; ++j) cases[idx[k++]].split = static_cast<Split>(s);
  }
}

// ---------------------------------------------------------------------------
// Manifest I/O
// ---------------------------------------------------------------------------

void write_dataset(const std::vector<FollowupCase>& cases, const std::string& manifest_path,
                   const std::string& data_dir, const std::array<int, 3>& shape, uint64_t seed) {
  if (cases.empty()) fail("write_dataset: no cases");
  fs::path mdir = fs::path(manifest_path).parent_path();
  fs::create_directories(data_dir);
  fs::path rel = fs::relative(data_dir, mdir.empty() ? "." : mdir);

  json manifest;
  manifest["version"] = 1;
  manifest["volume_shape"] = shape;
  manifest["seed"] = seed;
  json entries = json::array();
  for (const auto& c : cases) {
    std::string t0p = (fs::path(data_dir) / (c.case_id + "_t0.vol")).string();
    std::string t1p = (fs::path(data_dir) / (c.case_id + "_t1.vol")).string();
    write_volume(t0p, c.shape, c.t0_volume);
    write_volume(t1p, c.shape, c.t1_volume);
    json e;
    e["case_id"] = c.case_id;
    e["t0"] = (rel / (c.case_id + "_t0.vol")).generic_string();
    e["t1"] = (rel / (c.case_id + "_t1.vol")).generic_string();
    e["clinical"] = {{"age", c.clinical.age},
                     {"sex", to_string(c.clinical.sex)},
                     {"smoking_status", to_string(c.clinical.smoking)},
                     {"screening_result", to_string(c.clinical.screening)}};
    e["label"] = c.label;
    e["split"] = to_string(c.split);
    entries.push_back(std::move(e));
  }
  manifest["cases"] = std::move(entries);

  if (!mdir.empty()) fs::create_directories(mdir);
  std::ofstream os(manifest_path, std::ios::trunc);
  if (!os) fail("write_dataset: cannot open " + manifest_path);
  os << manifest.dump(2) << "\n";
}

uint64_t read_dataset_seed(const std::string& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) fail("read_dataset: cannot open " + manifest_path);
  json m = json::parse(is, nullptr, /*allow_exceptions=*/true);
  return m.at("seed").get<uint64_t>();
}

std::vector<FollowupCase> read_dataset(const std::string& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) fail("read_dataset: cannot open " + manifest_path);
  json m;
  try {
    m = json::parse(is);
  } catch (const json::exception& e) {
    fail("read_dataset: invalid manifest JSON: " + std::string(e.what()));
  }
  if (m.at("version").get<int>() != 1) fail("read_dataset: unsupported manifest version");
  std::array<int, 3> shape = m.at("volume_shape").get<std::array<int, 3>>();
  fs::path mdir = fs::path(manifest_path).parent_path();

  std::vector<FollowupCase> cases;
  std::set<std::string> ids;
  for (const auto& e : m.at("cases")) {
    FollowupCase c;
    c.case_id = e.at("case_id").get<std::string>();
    if (!ids.insert(c.case_id).second)
      fail("read_dataset: duplicate case_id '" + c.case_id + "'");
    const auto& cl = e.at("clinical");
    c.clinical.age = cl.at("age").get<int>();
    c.clinical.sex = sex_from_string(cl.at("sex").get<std::string>());
    c.clinical.smoking = smoking_from_string(cl.at("smoking_status").get<std::string>());
    c.clinical.screening = screening_from_string(cl.at("screening_result").get<std::string>());
    c.clinical.validate();
    c.label = e.at("label").get<int>();
    if (c.label != 0 && c.label != 1)
      fail("read_dataset: label outside {0,1} for case '" + c.case_id + "'");
    c.split = split_from_string(e.at("split").get<std::string>());

    for (int t = 0; t < 2; ++t) {
      std::string relp = e.at(t == 0 ? "t0" : "t1").get<std::string>();
      std::string path = (mdir / relp).string();
      std::array<int, 3> dims;
      std::vector<float> vol;
      try {
        vol = read_volume(path, dims);
      } catch (const ValidationError& ex) {
        fail("read_dataset: case '" + c.case_id + "': " + ex.what());
      }
      if (dims != shape)
        fail("read_dataset: case '" + c.case_id + "': volume shape mismatch");
      for (float v : vol)
        if (!(v >= 0.0f && v <= 1.0f))
          fail("read_dataset: case '" + c.case_id + "': voxel outside [0,1]");
      (t == 0 ? c.t0_volume : c.t1_volume) = std::move(vol);
    }
    c.shape = shape;
    cases.push_back(std::move(c));
  }
  if (cases.empty()) fail("read_dataset: manifest lists no cases");
  return cases;
}

}  // namespace csf
