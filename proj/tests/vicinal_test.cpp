// Copyright 2026 The vrmood Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <cmath>
#include <map>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "vrmood/data.hpp"
#include "vrmood/vicinal.hpp"

namespace vrmood {
namespace {

Dataset tiny(std::vector<std::vector<double>> xs, std::vector<std::size_t> ys, std::size_t k) {
  std::vector<Tensor> f;
  for (auto& x : xs) f.push_back(Tensor::vector(std::move(x)));
  return Dataset(std::move(f), std::move(ys), k);
}

TEST(Mixup, LambdaOneReturnsFirstOperand) {
  const Tensor xi = Tensor::vector({0.1, 0.7}), xj = Tensor::vector({3, -2});
  const Tensor yi = Tensor::vector({1, 0}), yj = Tensor::vector({0, 1});
  const auto m = mixup(xi, yi, xj, yj, 1.0);
  EXPECT_EQ(m.x, xi);
  EXPECT_EQ(m.y, yi);
}

TEST(Mixup, QuarterLambda) {
  const Tensor y = Tensor::vector({1});
  const auto m = mixup(Tensor::vector({0, 4}), y, Tensor::vector({4, 0}), y, 0.25);
  EXPECT_EQ(m.x, Tensor::vector({3, 1}));
}

TEST(Mixup, SameLabelIsPreservedForEveryLambda) {
  const Tensor y = Tensor::vector({0.1, 0.6, 0.3});
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 1000; ++t) {
    const auto m = mixup(Tensor::vector({u(rng)}), y, Tensor::vector({u(rng)}), y, u(rng));
    EXPECT_EQ(m.y, y);
  }
}

TEST(Mixup, StaysInSegmentAndLabelsStayNormalized) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-5, 5);
  std::uniform_real_distribution<double> unit(0, 1);
  for (int t = 0; t < 2000; ++t) {
    std::vector<double> a(4), b(4);
    for (double& v : a) v = u(rng);
    for (double& v : b) v = u(rng);
    const double p = unit(rng), q = unit(rng);
    const Tensor yi = Tensor::vector({p, 1 - p}), yj = Tensor::vector({q, 1 - q});
    const auto m = mixup(Tensor::vector(a), yi, Tensor::vector(b), yj, unit(rng));
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_GE(m.x[i], std::min(a[i], b[i]));
      EXPECT_LE(m.x[i], std::max(a[i], b[i]));
    }
    EXPECT_NEAR(m.y[0] + m.y[1], 1.0, 1e-12);
  }
}

TEST(Mixup, Errors) {
  const Tensor y = Tensor::vector({1});
  EXPECT_THROW(mixup(Tensor::vector({1}), y, Tensor::vector({2}), y, 1.5), DomainError);
  EXPECT_THROW(mixup(Tensor::vector({1}), y, Tensor::vector({2}), y, -0.1), DomainError);
  EXPECT_THROW(mixup(Tensor::vector({1}), y, Tensor::vector({2, 3}), y, 0.5), DimensionError);
}

TEST(SameClassPartner, SingletonReturnsItself) {
  const Dataset d = tiny({{0}, {1}, {2}}, {1, 2, 2}, 2);
  Rng rng(1);
  for (int t = 0; t < 20; ++t) EXPECT_EQ(same_class_partner(d, 0, rng), 0u);
}

TEST(SameClassPartner, UniformOverThreeMembers) {
  const Dataset d = tiny({{0}, {1}, {2}, {3}, {4}}, {2, 1, 2, 1, 2}, 2);
  Rng rng(2);
  std::map<std::size_t, int> freq;
  const int n = 10000;
  for (int t = 0; t < n; ++t) {
    const std::size_t j = same_class_partner(d, 2, rng);
    EXPECT_EQ(d.label(j), 2u);
    ++freq[j];
  }
  ASSERT_EQ(freq.size(), 3u);
  for (const auto& [idx, count] : freq) {
    EXPECT_NEAR(count / static_cast<double>(n), 1.0 / 3.0, 0.05 / 3.0) << idx;
  }
}

TEST(SameClassPartner, ClassIndexAgreesWithDirectDraw) {
  const Dataset d = tiny({{0}, {1}, {2}, {3}}, {1, 2, 1, 1}, 2);
  const ClassIndex idx(d);
  Rng a(9), b(9);
  for (int t = 0; t < 100; ++t) EXPECT_EQ(idx.partner(1, a), same_class_partner(d, 0, b));
}

TEST(NoiseLike, ConstantDatasetClampsStd) {
  const Dataset d = tiny({{2, 5}, {2, 5}}, {1, 1}, 1);
  const auto g = noise_like(d, NoiseKind::gaussian);
  EXPECT_EQ(g.std, (std::vector<double>{kMinNoiseStd, kMinNoiseStd}));
  const auto u = noise_like(d, NoiseKind::uniform);
  EXPECT_NO_THROW(u.validate());
}

TEST(NoiseLike, PopulationStatistics) {
  const Dataset d = tiny({{0}, {2}}, {1, 1}, 1);
  const auto g = noise_like(d, NoiseKind::gaussian);
  EXPECT_EQ(g.mean, std::vector<double>{1.0});
  EXPECT_EQ(g.std, std::vector<double>{1.0});
  const auto u = noise_like(d, NoiseKind::uniform);
  EXPECT_EQ(u.low, std::vector<double>{0.0});
  EXPECT_EQ(u.high, std::vector<double>{2.0});
}

TEST(NoiseLike, SampleStatisticsMatchNoiseParameters) {
  const Dataset d = tiny({{-3, 10}, {1, 14}, {5, 12}, {-1, 8}}, {1, 1, 1, 1}, 1);
  const auto spec = noise_like(d, NoiseKind::gaussian);
  Rng rng(77);
  const int n = 10000;
  std::vector<double> sum(2, 0), sq(2, 0);
  for (int t = 0; t < n; ++t) {
    const Tensor x = spec.sample(rng);
    for (int j = 0; j < 2; ++j) {
      sum[j] += x[j];
      sq[j] += x[j] * x[j];
    }
  }
  for (int j = 0; j < 2; ++j) {
    const double mean = sum[j] / n;
    const double sd = std::sqrt(sq[j] / n - mean * mean);
    EXPECT_NEAR(mean, spec.mean[j], 0.05 * std::abs(spec.mean[j]) + 0.05 * spec.std[j]);
    EXPECT_NEAR(sd, spec.std[j], 0.05 * spec.std[j]);
  }
}

TEST(NoiseLike, EmptyDatasetRejected) {
  EXPECT_THROW(noise_like(Dataset({}, {}, 1), NoiseKind::gaussian), DegenerateInputError);
}

TEST(LambdaDist, FixedUniformAndBetaRanges) {
  Rng rng(3);
  EXPECT_EQ(draw_lambda(LambdaFixed{0.3}, rng), 0.3);
  double beta_sum = 0;
  for (int t = 0; t < 5000; ++t) {
    const double u = draw_lambda(LambdaUniform{}, rng);
    const double b = draw_lambda(LambdaBeta{0.4}, rng);
    EXPECT_TRUE(u >= 0 && u <= 1);
    EXPECT_TRUE(b >= 0 && b <= 1);
    beta_sum += b;
  }
  // Beta(a, a) is symmetric about 1/2.
  EXPECT_NEAR(beta_sum / 5000, 0.5, 0.02);
}

TEST(MixPolicy, Validation) {
  MixPolicy p;
  EXPECT_NO_THROW(p.validate());
  p.p_noise = 1.2;
  EXPECT_THROW(p.validate(), ConfigError);
  p.p_noise = 0.5;
  p.lambda_dist = LambdaBeta{0};
  EXPECT_THROW(p.validate(), ConfigError);
  p.lambda_dist = LambdaFixed{-0.1};
  EXPECT_THROW(p.validate(), ConfigError);
}

class OodAugment : public ::testing::Test {
 protected:
  Dataset d_out = tiny({{10, 10}, {20, 20}, {30, 30}}, {1, 1, 1}, 1);
  NoiseSpec noise{NoiseKind::gaussian, {0, 0}, {1e-3, 1e-3}, {}, {}};
};

TEST_F(OodAugment, NoNoisePartnerAlwaysFromDOut) {
  MixPolicy p{LambdaFixed{0}, 0.0, NoiseKind::gaussian};
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    const auto m = ood_augment(Tensor::vector({0, 0}), d_out, &noise, p, rng, 3);
    // lambda = 0 yields the partner itself
    EXPECT_TRUE(m.x[0] == 10 || m.x[0] == 20 || m.x[0] == 30);
    EXPECT_EQ(m.y, Tensor::vector({0, 0, 0, 1}));
  }
}

TEST_F(OodAugment, NoiseKindNoneMixesWithinDOut) {
  MixPolicy p{LambdaFixed{0}, 1.0, NoiseKind::none};
  Rng rng(6);
  for (int t = 0; t < 200; ++t) {
    const auto m = ood_augment(Tensor::vector({0, 0}), d_out, nullptr, p, rng, 2);
    EXPECT_TRUE(m.x[0] == 10 || m.x[0] == 20 || m.x[0] == 30);
  }
}

TEST_F(OodAugment, FullNoiseWithUnitLambdaKeepsInput) {
  MixPolicy p{LambdaFixed{1}, 1.0, NoiseKind::gaussian};
  Rng rng(7);
  const Tensor x = Tensor::vector({-4, 2.5});
  const auto m = ood_augment(x, d_out, &noise, p, rng, 2);
  EXPECT_EQ(m.x, x);
  EXPECT_EQ(m.y, Tensor::vector({0, 0, 1}));
}

TEST_F(OodAugment, NoiseShareMatchesPNoise) {
  MixPolicy p{LambdaFixed{0}, 0.3, NoiseKind::gaussian};
  Rng rng(8);
  int noisy = 0;
  const int n = 10000;
  for (int t = 0; t < n; ++t) {
    const auto m = ood_augment(Tensor::vector({0, 0}), d_out, &noise, p, rng, 2);
    if (std::abs(m.x[0]) < 1) ++noisy;
  }
  EXPECT_NEAR(noisy / static_cast<double>(n), 0.3, 0.015);
}

TEST_F(OodAugment, ReproducibleAndRejectsEmpty) {
  MixPolicy p;
  Rng a(42), b(42);
  for (int t = 0; t < 50; ++t) {
    const auto ma = ood_augment(Tensor::vector({1, 2}), d_out, &noise, p, a, 2);
    const auto mb = ood_augment(Tensor::vector({1, 2}), d_out, &noise, p, b, 2);
    EXPECT_EQ(ma.x, mb.x);
  }
  EXPECT_THROW(ood_augment(Tensor::vector({1, 2}), Dataset({}, {}, 1), &noise, p, a, 2),
               DegenerateInputError);
}

}  // namespace
}  // namespace vrmood
