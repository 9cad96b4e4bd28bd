#include <cmath>

#include "csfnet/conv.hpp"
#include "csfnet/ops.hpp"
#include "csfnet/rng.hpp"
#include "doctest.h"
#include "reference.hpp"

using namespace csf;

namespace {
Tensor<double> random_vol(Shape s, Rng& rng, bool tracked = false) {
  Tensor<double> t(std::move(s), tracked);
  for (auto& v : t.value()) v = rng.uniform(-1, 1);
  return t;
}
}  // namespace

TEST_CASE("conv3d with 1x1x1 identity kernel reproduces input") {
  Rng rng(11);
  auto x = random_vol({2, 1, 3, 4, 5}, rng);
  auto w = Tensor<double>::from({1, 1, 1, 1, 1}, {1.0});
  auto b = Tensor<double>::from({1}, {0.0});
  auto y = conv3d(x, w, b, 1, 0);
  CHECK(y.shape() == x.shape());
  for (size_t i = 0; i < x.value().size(); ++i)
    CHECK(y.value()[i] == doctest::Approx(x.value()[i]));
}

TEST_CASE("all-ones 4^3 input with 3^3 ones kernel gives 27 in the interior") {
  auto x = Tensor<double>::full({1, 1, 4, 4, 4}, 1.0);
  auto w = Tensor<double>::full({1, 1, 3, 3, 3}, 1.0);
  auto b = Tensor<double>::from({1}, {0.0});
  auto y = conv3d(x, w, b, 1, 0);
  CHECK(y.shape() == Shape{1, 1, 2, 2, 2});
  for (double v : y.value()) CHECK(v == doctest::Approx(27.0));
}

TEST_CASE("strided padded conv output shape") {
  Tensor<double> x({1, 1, 16, 64, 64}, false);
  Tensor<double> w({8, 1, 3, 3, 3}, false);
  Tensor<double> b({8}, false);
  CHECK(conv3d(x, w, b, 2, 1).shape() == Shape{1, 8, 8, 32, 32});
}

TEST_CASE("conv3d matches the naive nested-loop oracle on random cases") {
  Rng rng(42);
  struct Case {
    Shape xs, ws;
    int stride, pad;
  };
  const Case cases[] = {
      {{1, 2, 5, 5, 5}, {3, 2, 3, 3, 3}, 1, 1},
      {{2, 3, 6, 4, 5}, {2, 3, 3, 3, 3}, 2, 1},
      {{1, 1, 4, 6, 6}, {4, 1, 2, 2, 2}, 2, 0},
      {{2, 2, 3, 3, 3}, {2, 2, 1, 3, 1}, 1, 0},
  };
  for (const auto& c : cases) {
    auto x = random_vol(c.xs, rng);
    auto w = random_vol(c.ws, rng);
    Tensor<double> b({c.ws[0]}, false);
    for (auto& v : b.value()) v = rng.uniform(-1, 1);
    auto y = conv3d(x, w, b, c.stride, c.pad);
    auto ref = refimpl::conv3d_naive(x.value(), c.xs, w.value(), c.ws, b.value(), c.stride, c.pad);
    REQUIRE(y.value().size() == ref.size());
    for (size_t i = 0; i < ref.size(); ++i) CHECK(y.value()[i] == doctest::Approx(ref[i]).epsilon(1e-5));
  }
}

TEST_CASE("conv3d validation") {
  Tensor<double> x({1, 2, 4, 4, 4}, false);
  Tensor<double> w({3, 3, 3, 3, 3}, false);  // channel mismatch
  Tensor<double> b({3}, false);
  CHECK_THROWS_AS(conv3d(x, w, b, 1, 1), ValidationError);
  Tensor<double> w2({3, 2, 3, 3, 3}, false);
  CHECK_THROWS_AS(conv3d(x, w2, Tensor<double>({4}, false), 1, 1), ValidationError);
  CHECK_THROWS_AS(conv3d(x, w2, b, 0, 1), ValidationError);
  CHECK_THROWS_AS(conv3d(x, w2, b, 1, -1), ValidationError);
  // kernel larger than padded input
  CHECK_THROWS_AS(conv3d(x, Tensor<double>({1, 2, 7, 7, 7}, false), Tensor<double>({1}, false), 1, 0),
                  ValidationError);
}

TEST_CASE("average pool of a constant volume is that constant") {
  auto x = Tensor<double>::full({1, 2, 4, 4, 4}, 7.0);
  auto y = pool3d(x, PoolKind::avg, 2, 2);
  CHECK(y.shape() == Shape{1, 2, 2, 2, 2});
  for (double v : y.value()) CHECK(v == doctest::Approx(7.0));
}

TEST_CASE("global pools over 1..8") {
  auto x = Tensor<double>::from({1, 1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(global_pool3d(x, PoolKind::max).value()[0] == doctest::Approx(8.0));
  CHECK(global_pool3d(x, PoolKind::avg).value()[0] == doctest::Approx(4.5));
  CHECK(global_pool3d(x, PoolKind::max).shape() == Shape{1, 1, 1, 1, 1});
}

TEST_CASE("max pool routes gradient only to the argmax") {
  auto x = Tensor<double>::from({1, 1, 2, 2, 2}, {1, 9, 3, 4, 0, 2, 5, 7}, true);
  backward(sum_all(pool3d(x, PoolKind::max, 2, 2)));
  CHECK(x.grad() == std::vector<double>{0, 1, 0, 0, 0, 0, 0, 0});
}

TEST_CASE("upsample3d") {
  Rng rng(7);
  auto x = random_vol({1, 2, 2, 3, 2}, rng);

  SUBCASE("factor 1 is identity") {
    auto y = upsample3d(x, 1);
    CHECK(y.value() == x.value());
  }
  SUBCASE("nearest neighbor replicates each voxel f^3 times") {
    int f = 2;
    auto y = upsample3d(x, f);
    CHECK(y.shape() == Shape{1, 2, 4, 6, 4});
    // every output voxel equals its source voxel
    int D = 2, H = 3, W = 2;
    for (int c = 0; c < 2; ++c)
      for (int z = 0; z < D * f; ++z)
        for (int h = 0; h < H * f; ++h)
          for (int w = 0; w < W * f; ++w) {
            double src = x.value()[((c * D + z / f) * H + h / f) * W + w / f];
            double dst = y.value()[((c * (D * f) + z) * (H * f) + h) * (W * f) + w];
            CHECK(dst == src);
          }
    double sx = 0, sy = 0;
    for (double v : x.value()) sx += v;
    for (double v : y.value()) sy += v;
    CHECK(sy == doctest::Approx(f * f * f * sx));
  }
  SUBCASE("bad factor rejected") { CHECK_THROWS_AS(upsample3d(x, 0), ValidationError); }
}

TEST_CASE("pool3d validation") {
  Tensor<double> x({1, 1, 3, 3, 3}, false);
  CHECK_THROWS_AS(pool3d(x, PoolKind::avg, 0, 1), ValidationError);
  CHECK_THROWS_AS(pool3d(x, PoolKind::avg, 4, 4), ValidationError);  // kernel exceeds input
  CHECK_THROWS_AS(pool3d(Tensor<double>({3, 3, 3}, false), PoolKind::avg, 2, 2), ValidationError);
}

TEST_CASE("avg pool then nearest upsample preserves the mean structure") {
  Rng rng(5);
  auto x = random_vol({1, 1, 4, 4, 4}, rng);
  auto y = upsample3d(pool3d(x, PoolKind::avg, 2, 2), 2);
  CHECK(y.shape() == x.shape());
  double sx = 0, sy = 0;
  for (double v : x.value()) sx += v;
  for (double v : y.value()) sy += v;
  CHECK(sy == doctest::Approx(sx));
}
