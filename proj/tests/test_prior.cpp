#include <gtest/gtest.h>

#include <cmath>

#include "prflow/error.hpp"
#include "prflow/prior.hpp"
#include "support.hpp"

using namespace prflow;
using prflow::test::central_diff;
using prflow::test::max_rel_err;

namespace {

std::vector<double> image(std::initializer_list<double> v) { return v; }

FilterBank exact(double alpha) { return FilterBank::make(FilterKind::Derivative, alpha, 0.0); }

// Anisotropic total variation by direct differencing.
double total_variation(const std::vector<double>& x, const ImageShape& s) {
  double tv = 0.0;
  for (std::size_t c = 0; c < s.channels; ++c) {
    for (std::size_t r = 0; r < s.height; ++r) {
      for (std::size_t q = 0; q < s.width; ++q) {
        if (q + 1 < s.width) tv += std::abs(x[s.index(r, q + 1, c)] - x[s.index(r, q, c)]);
        if (r + 1 < s.height) tv += std::abs(x[s.index(r + 1, q, c)] - x[s.index(r, q, c)]);
      }
    }
  }
  return tv;
}

std::vector<double> random_image(Rng& rng, const ImageShape& s) {
  std::vector<double> x(s.size());
  for (auto& v : x) v = uniform01(rng);
  return x;
}

}  // namespace

TEST(FilterBank, Defaults) {
  const FilterBank bank = FilterBank::make(FilterKind::Derivative);
  ASSERT_EQ(bank.filters.size(), 2u);
  EXPECT_EQ(bank.filters[0].rows, 1u);
  EXPECT_EQ(bank.filters[0].taps, (std::vector<double>{1, -1}));
  EXPECT_EQ(bank.filters[1].cols, 1u);
  EXPECT_EQ(bank.filters[1].taps, (std::vector<double>{1, -1}));
  EXPECT_DOUBLE_EQ(bank.alpha, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(bank.epsilon, 1e-6);
  EXPECT_EQ(FilterBank::make(FilterKind::Literal).filters[0].taps, (std::vector<double>{1, 1}));
  EXPECT_EQ(parse_filter_kind("literal"), FilterKind::Literal);
  EXPECT_EQ(to_string(FilterKind::Derivative), "derivative");
  EXPECT_THROW(parse_filter_kind("sobel"), ContractError);
}

TEST(FilterBank, Validation) {
  EXPECT_THROW(FilterBank::make(FilterKind::Derivative, 0.0).validate(), ContractError);
  EXPECT_THROW(FilterBank::make(FilterKind::Derivative, 1.5).validate(), ContractError);
  EXPECT_THROW(FilterBank::make(FilterKind::Derivative, 0.5, -1.0).validate(), ContractError);
  FilterBank empty = FilterBank::make(FilterKind::Derivative);
  empty.filters.clear();
  EXPECT_THROW(empty.validate(), ContractError);
}

TEST(GradientMaps, ConstantImageIsZero) {
  const ImageShape s{4, 5, 1};
  const std::vector<double> x(s.size(), 0.37);
  const GradientMap g = gradient_maps(x, s, FilterBank::make(FilterKind::Derivative));
  ASSERT_EQ(g.responses.size(), 2u);
  EXPECT_EQ(g.responses[0].shape(), (std::vector<std::size_t>{4, 4, 1}));
  EXPECT_EQ(g.responses[1].shape(), (std::vector<std::size_t>{3, 5, 1}));
  for (const auto& t : g.responses) {
    for (double v : t.values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(GradientMaps, HandExample) {
  const auto x = image({0, 1, 0, 1});
  const GradientMap g = gradient_maps(x, {2, 2, 1}, FilterBank::make(FilterKind::Derivative));
  EXPECT_EQ(std::vector<double>(g.responses[0].values().begin(), g.responses[0].values().end()),
            (std::vector<double>{-1, -1}));
  EXPECT_EQ(std::vector<double>(g.responses[1].values().begin(), g.responses[1].values().end()),
            (std::vector<double>{0, 0}));
}

TEST(GradientMaps, Ramp) {
  const ImageShape s{5, 8, 1};
  std::vector<double> x(s.size());
  for (std::size_t r = 0; r < s.height; ++r) {
    for (std::size_t q = 0; q < s.width; ++q) x[s.index(r, q)] = double(q) / double(s.width);
  }
  const GradientMap g = gradient_maps(x, s, FilterBank::make(FilterKind::Derivative));
  for (double v : g.responses[0].values()) EXPECT_NEAR(v, -1.0 / 8.0, 1e-15);
  for (double v : g.responses[1].values()) EXPECT_EQ(v, 0.0);
}

TEST(GradientMaps, PerChannel) {
  const ImageShape s{2, 2, 2};
  // Channel 0 varies horizontally, channel 1 vertically.
  std::vector<double> x(s.size(), 0.0);
  x[s.index(0, 1, 0)] = x[s.index(1, 1, 0)] = 1.0;
  x[s.index(1, 0, 1)] = x[s.index(1, 1, 1)] = 1.0;
  const GradientMap g = gradient_maps(x, s, FilterBank::make(FilterKind::Derivative));
  const Tensor& h = g.responses[0];
  const Tensor& v = g.responses[1];
  EXPECT_EQ(h[0], -1.0);  // (0,0,ch0)
  EXPECT_EQ(h[1], 0.0);   // (0,0,ch1)
  EXPECT_EQ(v[0], 0.0);
  EXPECT_EQ(v[1], -1.0);
}

TEST(GradientMaps, ImageSmallerThanKernel) {
  const auto x = image({1, 2});
  EXPECT_THROW(gradient_maps(x, {2, 1, 1}, FilterBank::make(FilterKind::Derivative)),
               ContractError);
}

TEST(PriorPenalty, ConstantIsZero) {
  const ImageShape s{6, 6, 1};
  EXPECT_EQ(prior_penalty(std::vector<double>(36, 0.4), s, exact(1.0 / 3.0)), 0.0);
  // With smoothing the value is the epsilon floor: (#responses) * eps^(alpha/2).
  const double smoothed = prior_penalty(std::vector<double>(36, 0.4), s,
                                        FilterBank::make(FilterKind::Derivative));
  EXPECT_NEAR(smoothed, 60.0 * std::pow(1e-6, 1.0 / 6.0), 1e-12);
}

TEST(PriorPenalty, HandExample) {
  const auto x = image({0, 1, 0, 1});
  EXPECT_NEAR(prior_penalty(x, {2, 2, 1}, exact(1.0 / 3.0)), 2.0, 1e-15);
}

TEST(PriorPenalty, AlphaOneIsTotalVariation) {
  Rng rng(1);
  for (const ImageShape s : {ImageShape{8, 8, 1}, ImageShape{5, 7, 3}}) {
    const auto x = random_image(rng, s);
    EXPECT_NEAR(prior_penalty(x, s, exact(1.0)), total_variation(x, s), 1e-12);
  }
}

TEST(PriorPenalty, TranslationInvariance) {
  Rng rng(2);
  const ImageShape s{6, 7, 1};
  auto x = random_image(rng, s);
  const FilterBank bank = FilterBank::make(FilterKind::Derivative);
  const double base = prior_penalty(x, s, bank);
  for (auto& v : x) v += 0.25;
  EXPECT_NEAR(prior_penalty(x, s, bank), base, 1e-12);
}

TEST(PriorPenalty, MonotoneInContrast) {
  Rng rng(3);
  const ImageShape s{6, 6, 1};
  auto x = random_image(rng, s);
  double mean = 0.0;
  for (double v : x) mean += v / double(x.size());
  for (auto& v : x) v -= mean;
  const FilterBank bank = FilterBank::make(FilterKind::Derivative);
  double prev = -1.0;
  for (double k = 0.0; k <= 3.0; k += 0.25) {
    std::vector<double> scaled(x);
    for (auto& v : scaled) v *= k;
    const double p = prior_penalty(scaled, s, bank);
    EXPECT_GE(p, prev);
    prev = p;
  }
}

TEST(PriorPenalty, PrefersSparseGradients) {
  // Both 1x9 profiles rise by 1 in total: one jump versus eight small steps.
  const ImageShape s{1, 9, 1};
  std::vector<double> step(9, 0.0), ramp(9);
  for (std::size_t q = 4; q < 9; ++q) step[q] = 1.0;
  for (std::size_t q = 0; q < 9; ++q) ramp[q] = double(q) / 8.0;
  auto horizontal = [](double alpha) {
    FilterBank b = exact(alpha);
    b.filters.resize(1);
    return b;
  };
  for (double alpha : {1.0 / 3.0, 0.5, 0.8}) {
    const FilterBank bank = horizontal(alpha);
    EXPECT_LT(prior_penalty(step, s, bank), prior_penalty(ramp, s, bank)) << alpha;
  }
  EXPECT_NEAR(prior_penalty(step, s, horizontal(1.0)), prior_penalty(ramp, s, horizontal(1.0)),
              1e-12);
}

TEST(PriorGradient, ConstantImageIsExactlyZero) {
  const ImageShape s{5, 5, 1};
  const Vector g = prior_gradient(std::vector<double>(25, 0.6), s,
                                  FilterBank::make(FilterKind::Derivative));
  EXPECT_TRUE((g.array() == 0.0).all());
}

TEST(PriorGradient, MatchesFiniteDifferences) {
  Rng rng(4);
  for (FilterKind kind : {FilterKind::Derivative, FilterKind::Literal}) {
    for (const ImageShape s : {ImageShape{8, 8, 1}, ImageShape{4, 5, 3}}) {
      const auto x = random_image(rng, s);
      const FilterBank bank = FilterBank::make(kind);
      const Vector g = prior_gradient(x, s, bank);
      const auto fd = central_diff(
          [&](std::span<const double> v) { return prior_penalty(v, s, bank); }, x, 1e-7);
      EXPECT_LT(max_rel_err(std::span(g.data(), g.size()), fd, 1e-6), 1e-4);
    }
  }
}

TEST(PriorGradient, ImpulseSymmetry) {
  const ImageShape s{5, 5, 1};
  std::vector<double> x(25, 0.0);
  x[s.index(2, 2)] = 1.0;
  FilterBank horizontal = FilterBank::make(FilterKind::Derivative);
  horizontal.filters.resize(1);
  const GradientMap maps = gradient_maps(x, s, horizontal);
  // Responses either side of the impulse are equal and opposite.
  EXPECT_EQ(maps.responses[0][2 * 4 + 1], -1.0);
  EXPECT_EQ(maps.responses[0][2 * 4 + 2], 1.0);
  const Vector g = prior_gradient(x, s, horizontal);
  const double left = g[static_cast<Eigen::Index>(s.index(2, 1))];
  const double right = g[static_cast<Eigen::Index>(s.index(2, 3))];
  const double centre = g[static_cast<Eigen::Index>(s.index(2, 2))];
  EXPECT_LT(left, 0.0);
  EXPECT_DOUBLE_EQ(left, right);
  EXPECT_DOUBLE_EQ(centre, -2.0 * left);
  EXPECT_NEAR(g.sum(), 0.0, 1e-12);
}

TEST(PriorGradient, RejectsZeroEpsilon) {
  const auto x = image({0, 1, 0, 1});
  EXPECT_THROW(prior_gradient(x, {2, 2, 1}, exact(1.0 / 3.0)), ContractError);
}

TEST(PriorGradient, FusedSweepMatchesSeparateCalls) {
  Rng rng(5);
  const ImageShape s{6, 6, 1};
  const auto x = random_image(rng, s);
  const FilterBank bank = FilterBank::make(FilterKind::Derivative);
  std::vector<double> grad(s.size(), 1.0);
  const double p = prior_penalty_and_gradient(x, s, bank, 0.5, grad);
  EXPECT_NEAR(p, prior_penalty(x, s, bank), 1e-12);
  const Vector g = prior_gradient(x, s, bank);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    EXPECT_NEAR(grad[i], 1.0 + 0.5 * g[static_cast<Eigen::Index>(i)], 1e-12);
  }
}
