#include <gtest/gtest.h>

#include <cstdlib>
#include <limits>

#include "prflow/data.hpp"
#include "prflow/error.hpp"
#include "prflow/imputer.hpp"
#include "support.hpp"

using namespace prflow;
using prflow::test::central_diff;
using prflow::test::max_rel_err;
using prflow::test::random_matrix;

namespace {

ImputerNetwork small_imputer(std::size_t dim, std::uint64_t seed, double out_scale = 1e-3) {
  ImputerOptions o;
  o.dim = dim;
  o.hidden_width = 8;
  o.init_scale = out_scale;
  ImputerNetwork h(o);
  Rng rng(seed);
  h.init(rng);
  return h;
}

FlowNetwork small_flow(std::size_t dim, std::uint64_t seed) {
  FlowOptions o;
  o.dim = dim;
  o.hidden_width = 8;
  FlowNetwork f(o);
  Rng rng(seed);
  f.randomize(rng, 0.3);
  return f;
}

MaskedSample make_sample(ImageShape shape, Vector values, Vector mask) {
  MaskedSample s;
  s.shape = shape;
  s.values = std::move(values);
  s.mask = std::move(mask);
  return s;
}

// Exhaustive nearest observed pixel, first hit in row-major order on ties.
Vector brute_nearest(const MaskedSample& s) {
  Vector out = s.values;
  const auto& sh = s.shape;
  for (std::size_t c = 0; c < sh.channels; ++c) {
    for (std::size_t r = 0; r < sh.height; ++r) {
      for (std::size_t q = 0; q < sh.width; ++q) {
        if (s.mask[static_cast<Eigen::Index>(sh.index(r, q, c))] == 1.0) continue;
        double best = std::numeric_limits<double>::infinity();
        double value = 0.0;
        for (std::size_t r2 = 0; r2 < sh.height; ++r2) {
          for (std::size_t q2 = 0; q2 < sh.width; ++q2) {
            const auto j = static_cast<Eigen::Index>(sh.index(r2, q2, c));
            if (s.mask[j] != 1.0) continue;
            const double dr = double(r2) - double(r), dq = double(q2) - double(q);
            const double dist = std::sqrt(dr * dr + dq * dq);
            if (dist < best) {
              best = dist;
              value = s.values[j];
            }
          }
        }
        out[static_cast<Eigen::Index>(sh.index(r, q, c))] = value;
      }
    }
  }
  return out;
}

}  // namespace

TEST(Imputer, DefaultArchitecture) {
  ImputerOptions o;
  o.dim = 784;
  EXPECT_EQ(o.resolved_hidden_width(), 784u);
  o.dim = 100;
  EXPECT_EQ(o.resolved_hidden_width(), 1024u);
  ImputerNetwork h(o);
  EXPECT_EQ(h.mlp().widths(), (std::vector<std::size_t>{100, 1024, 1024, 1024, 100}));
}

TEST(Imputer, ZeroParametersGiveZeroOutput) {
  ImputerNetwork h = small_imputer(6, 1);
  h.set_zero();
  Rng rng(2);
  const Matrix y = random_matrix(rng, 3, 6);
  EXPECT_TRUE((h.apply(y).array() == 0.0).all());
}

TEST(Imputer, IdentityInit) {
  ImputerNetwork h = small_imputer(6, 3);
  h.init_identity();
  Rng rng(4);
  const Matrix y = random_matrix(rng, 3, 6);
  EXPECT_EQ(h.apply(y), y);
}

TEST(Imputer, DefaultInitIsNearIdentity) {
  const ImputerNetwork h = small_imputer(6, 5);
  Rng rng(6);
  const Matrix y = random_matrix(rng, 3, 6);
  const double dev = (h.apply(y) - y).cwiseAbs().maxCoeff();
  EXPECT_GT(dev, 0.0);
  EXPECT_LT(dev, 1e-2);
}

TEST(Imputer, ParameterGradientMatchesFiniteDifferences) {
  const ImputerNetwork h = small_imputer(6, 7, 0.5);
  Rng rng(8);
  const Matrix y = random_matrix(rng, 3, 6);
  const Matrix w = random_matrix(rng, 3, 6);
  ImputerNetwork::Tape tape;
  h.apply(y, tape);
  std::vector<double> grad(h.parameter_count(), 0.0);
  const Matrix gy = h.backward(tape, w, grad, true);
  const auto fd = central_diff(
      [&](std::span<const double> p) {
        ImputerNetwork probe = h;
        probe.assign_parameters(p);
        return probe.apply(y).cwiseProduct(w).sum();
      },
      h.parameters());
  EXPECT_LT(max_rel_err(grad, fd, 1e-4), 1e-4);

  std::vector<double> yflat(y.data(), y.data() + y.size());
  const auto fd_in = central_diff(
      [&](std::span<const double> v) {
        return h.apply(Matrix(Eigen::Map<const Matrix>(v.data(), 3, 6))).cwiseProduct(w).sum();
      },
      yflat);
  EXPECT_LT(max_rel_err(std::span(gy.data(), gy.size()), fd_in, 1e-4), 1e-4);
}

TEST(ShallowInit, FullMaskIsUnchanged) {
  Rng rng(9);
  const ImageShape shape{3, 4, 1};
  const Vector v = random_matrix(rng, 12, 1, 0, 1).col(0);
  EXPECT_EQ(shallow_init(make_sample(shape, v, Vector::Ones(12))), v);
}

TEST(ShallowInit, SingleDonor) {
  Vector v = Vector::Zero(4);
  v[0] = 0.8;
  Vector m = Vector::Zero(4);
  m[0] = 1.0;
  const Vector out = shallow_init(make_sample({2, 2, 1}, v, m));
  EXPECT_TRUE((out.array() == 0.8).all());
}

TEST(ShallowInit, TwoCornersMatchBruteForce) {
  Vector v = Vector::Zero(9), m = Vector::Zero(9);
  v[0] = 0.2;
  m[0] = 1.0;
  v[8] = 0.9;
  m[8] = 1.0;
  const MaskedSample s = make_sample({3, 3, 1}, v, m);
  const Vector out = shallow_init(s);
  EXPECT_EQ(out, brute_nearest(s));
  EXPECT_EQ(out[1], 0.2);
  EXPECT_EQ(out[7], 0.9);
}

TEST(ShallowInit, TiesGoToRowMajorFirst) {
  Vector v(3), m(3);
  v << 0.1, 0.0, 0.7;
  m << 1.0, 0.0, 1.0;
  EXPECT_EQ(shallow_init(make_sample({1, 3, 1}, v, m))[1], 0.1);
}

TEST(ShallowInit, RandomMasksMatchBruteForce) {
  Rng rng(10);
  for (std::size_t channels : {1u, 3u}) {
    const ImageShape shape{7, 9, channels};
    for (int trial = 0; trial < 20; ++trial) {
      Vector v = random_matrix(rng, static_cast<Eigen::Index>(shape.size()), 1, 0, 1).col(0);
      Vector m(shape.size());
      for (std::size_t p = 0; p < shape.pixels(); ++p) {
        const double bit = uniform01(rng) < 0.3 ? 1.0 : 0.0;
        for (std::size_t c = 0; c < channels; ++c) m[static_cast<Eigen::Index>(p * channels + c)] = bit;
      }
      m[0] = 1.0;
      for (std::size_t c = 0; c < channels; ++c) m[static_cast<Eigen::Index>(c)] = 1.0;
      const MaskedSample s = make_sample(shape, v, m);
      EXPECT_EQ(shallow_init(s), brute_nearest(s));
    }
  }
}

TEST(ShallowInit, EmptySampleThrows) {
  EXPECT_THROW(shallow_init(make_sample({2, 2, 1}, Vector::Zero(4), Vector::Zero(4))),
               EmptySampleError);
}

TEST(Merge, Cases) {
  Vector x_hat(3);
  x_hat << 1.7, -0.3, 0.4;
  Vector v(3);
  v << 0.1, 0.2, 0.3;
  EXPECT_EQ(merge_observed(x_hat, make_sample({1, 3, 1}, v, Vector::Ones(3))), v);
  Vector clamped(3);
  clamped << 1.0, 0.0, 0.4;
  EXPECT_EQ(merge_observed(x_hat, make_sample({1, 3, 1}, v, Vector::Zero(3))), clamped);
  Vector m(3);
  m << 0.0, 1.0, 0.0;
  Vector mixed(3);
  mixed << 1.0, 0.2, 0.4;
  EXPECT_EQ(merge_observed(x_hat, make_sample({1, 3, 1}, v, m)), mixed);
}

TEST(Impute, IdentityPipelineIsFixedPoint) {
  FlowOptions fo;
  fo.dim = 6;
  fo.hidden_width = 8;
  FlowNetwork flow(fo);
  ImputerNetwork h = small_imputer(6, 11);
  h.init_identity();
  Rng rng(12);
  const Vector x = random_matrix(rng, 6, 1, 0, 1).col(0);
  Vector m(6);
  m << 1, 0, 1, 0, 0, 1;
  const MaskedSample s = make_sample({2, 3, 1}, x, m);
  EXPECT_EQ(impute(x, s, flow, h), x);
}

TEST(Impute, FullMaskReturnsObservations) {
  const FlowNetwork flow = small_flow(6, 13);
  const ImputerNetwork h = small_imputer(6, 14, 1.0);
  Rng rng(15);
  const Vector v = random_matrix(rng, 6, 1, 0, 1).col(0);
  const Vector prev = random_matrix(rng, 6, 1, 0, 1).col(0);
  EXPECT_EQ(impute(prev, make_sample({2, 3, 1}, v, Vector::Ones(6)), flow, h), v);
}

TEST(Impute, MatchesManualComposition) {
  const FlowNetwork flow = small_flow(6, 16);
  const ImputerNetwork h = small_imputer(6, 17, 1.0);
  Rng rng(18);
  const Vector x = random_matrix(rng, 6, 1, 0, 1).col(0);
  Vector m(6);
  m << 0, 1, 1, 0, 1, 0;
  const MaskedSample s = make_sample({2, 3, 1}, x, m);
  const Matrix y = flow.forward(Matrix(x.transpose())).values;
  const Matrix yr = h.apply(y);
  const Matrix xr = flow.inverse(yr).values;
  Vector expected(6);
  for (int i = 0; i < 6; ++i) expected[i] = m[i] == 1.0 ? x[i] : std::clamp(xr(0, i), 0.0, 1.0);
  EXPECT_EQ(impute(x, s, flow, h), expected);
}

TEST(Impute, BatchPreservesObservationsAndRange) {
  const FlowNetwork flow = small_flow(12, 19);
  const ImputerNetwork h = small_imputer(12, 20, 2.0);
  Rng rng(21);
  const Matrix truth = random_matrix(rng, 150, 12, 0, 1);
  Matrix masks(150, 12);
  for (Eigen::Index i = 0; i < masks.size(); ++i) masks.data()[i] = uniform01(rng) < 0.5 ? 1 : 0;
  const Matrix observed = truth.cwiseProduct(masks);
  const Matrix out = impute_batch(truth, observed, masks, flow, h);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      if (masks(i, j) == 1.0) {
        EXPECT_EQ(out(i, j), observed(i, j));
      } else {
        EXPECT_GE(out(i, j), 0.0);
        EXPECT_LE(out(i, j), 1.0);
      }
    }
  }
  // Per-sample and batched paths agree.
  for (Eigen::Index i : {0, 77, 149}) {
    const MaskedSample s = make_sample({3, 4, 1}, observed.row(i).transpose(), masks.row(i).transpose());
    const Vector one = impute(truth.row(i).transpose(), s, flow, h);
    EXPECT_LT((one - out.row(i).transpose()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Impute, BatchIsIndependentOfThreadCount) {
  const FlowNetwork flow = small_flow(12, 22);
  const ImputerNetwork h = small_imputer(12, 23, 2.0);
  Rng rng(24);
  const Matrix x = random_matrix(rng, 200, 12, 0, 1);
  const Matrix masks = Matrix::Zero(200, 12);
  setenv("PRFLOW_THREADS", "1", 1);
  const Matrix a = impute_batch(x, x, masks, flow, h);
  setenv("PRFLOW_THREADS", "4", 1);
  const Matrix b = impute_batch(x, x, masks, flow, h);
  unsetenv("PRFLOW_THREADS");
  EXPECT_EQ(a, b);
}
