#include "oracles.hpp"

#include "spegcl/errors.hpp"
#include "spegcl/spectral.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <random>

using namespace spegcl;

namespace {

Eigen::MatrixXd random_matrix(int m, int n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  Eigen::MatrixXd x(m, n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) x(i, j) = d(rng);
  }
  return x;
}

std::vector<double> random_vector(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> x(static_cast<std::size_t>(n));
  for (double& v : x) v = d(rng);
  return x;
}

}  // namespace

TEST(Fft, MatchesNaiveDftForManyLengths) {
  std::mt19937_64 rng(1);
  for (int n : {1, 2, 3, 4, 5, 7, 8, 12, 16, 17, 30, 64, 97}) {
    std::vector<oracle::cplx> x(static_cast<std::size_t>(n));
    for (auto& v : x) v = {random_vector(1, rng)[0], random_vector(1, rng)[0]};
    const auto expect = oracle::naive_dft(x);
    const auto got = dft1(std::span<const cplx>(x));
    for (int k = 0; k < n; ++k) EXPECT_LT(std::abs(got[k] - expect[k]), 1e-9 * n) << "n=" << n;
    const auto back = idft1(got);
    for (int k = 0; k < n; ++k) EXPECT_LT(std::abs(back[k] - x[k]), 1e-10) << "n=" << n;
  }
}

TEST(Dft2, ImpulseAndConstant) {
  Eigen::MatrixXd impulse = Eigen::MatrixXd::Zero(2, 2);
  impulse(0, 0) = 1;
  const SpectralField f = dft2(impulse);
  EXPECT_FALSE(f.shifted);
  for (int i = 0; i < 4; ++i) EXPECT_LT(std::abs(f.values(i) - cplx(1, 0)), 1e-15);

  const SpectralField c = dft2(Eigen::MatrixXd::Ones(2, 2));
  EXPECT_LT(std::abs(c.values(0, 0) - cplx(4, 0)), 1e-15);
  EXPECT_LT(std::abs(c.values(0, 1)) + std::abs(c.values(1, 0)) + std::abs(c.values(1, 1)), 1e-15);
}

TEST(Dft2, MatchesNaiveDoubleSum) {
  std::mt19937_64 rng(2);
  for (auto [m, n] : {std::pair{4, 4}, std::pair{5, 3}, std::pair{6, 7}}) {
    const Eigen::MatrixXd x = random_matrix(m, n, rng);
    EXPECT_LT((dft2(x).values - oracle::naive_dft2(x)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Dft2, EmptyInputRejected) { EXPECT_THROW(dft2(Eigen::MatrixXd(0, 3)), ArgumentError); }

TEST(Idft2, RoundTripAndDcBin) {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd x = random_matrix(5, 3, rng);
  EXPECT_LT((idft2(dft2(x)) - x).cwiseAbs().maxCoeff(), 1e-9);

  SpectralField dc{Eigen::MatrixXcd::Zero(3, 4), false};
  dc.values(0, 0) = 12.0;
  EXPECT_LT((idft2(dc).array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(Idft2, RejectsShiftedAndNonRealFields) {
  std::mt19937_64 rng(4);
  const SpectralField f = dft2(random_matrix(4, 4, rng));
  EXPECT_THROW(idft2(fshift(f)), StateError);
  SpectralField broken = f;
  broken.values(0, 1) += cplx(0, 5.0);  // breaks conjugate symmetry
  EXPECT_THROW(idft2(broken), StateError);
}

TEST(Fshift, CentersZeroFrequency) {
  SpectralField f{Eigen::MatrixXcd::Zero(4, 4), false};
  f.values(0, 0) = 4.0;
  const SpectralField s = fshift(f);
  EXPECT_TRUE(s.shifted);
  EXPECT_EQ(s.values(2, 2), cplx(4.0, 0));

  SpectralField odd{Eigen::MatrixXcd::Zero(3, 3), false};
  odd.values(0, 0) = 1.0;
  EXPECT_EQ(fshift(odd).values(1, 1), cplx(1.0, 0));
}

TEST(Fshift, InversePairIsBitExactAndStateChecked) {
  std::mt19937_64 rng(5);
  for (auto [m, n] : {std::pair{4, 6}, std::pair{5, 3}, std::pair{1, 7}}) {
    const SpectralField f = dft2(random_matrix(m, n, rng));
    const SpectralField back = ifshift(fshift(f));
    EXPECT_FALSE(back.shifted);
    EXPECT_TRUE((back.values.array() == f.values.array()).all());
  }
  const SpectralField f = dft2(Eigen::MatrixXd::Ones(2, 2));
  EXPECT_THROW(fshift(fshift(f)), StateError);
  EXPECT_THROW(ifshift(f), StateError);
}

TEST(AmplitudePhase, DirectEvaluation) {
  SpectralField f{Eigen::MatrixXcd(1, 4), false};
  f.values << cplx(3, 4), cplx(2, 0), cplx(-1, 0), cplx(0, 0);
  const AmplitudePhase ap = amplitude_phase(f);
  EXPECT_DOUBLE_EQ(ap.power(0, 0), 25.0);
  EXPECT_DOUBLE_EQ(ap.magnitude(0, 0), 5.0);
  EXPECT_NEAR(ap.phase(0, 0), 0.9273, 1e-4);
  EXPECT_EQ(ap.phase(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(ap.phase(0, 2), std::numbers::pi);
  EXPECT_EQ(ap.phase(0, 3), 0.0);
}

TEST(Mask, SmallGridCases) {
  const FreqMask center = build_mask(4, 4, 0.0, Band::low);
  EXPECT_EQ(center.count(), 1);
  EXPECT_EQ(center.grid(2, 2), 1);

  EXPECT_EQ(build_mask(4, 4, 3.0, Band::low).count(), 16);

  // Oracle: enumerate all 16 distances to (2, 2).
  const FreqMask unit = build_mask(4, 4, 1.0, Band::low);
  for (int m = 0; m < 4; ++m) {
    for (int z = 0; z < 4; ++z) {
      const bool inside = (m - 2) * (m - 2) + (z - 2) * (z - 2) <= 1;
      EXPECT_EQ(unit.grid(m, z), inside ? 1 : 0) << m << "," << z;
    }
  }
  EXPECT_EQ(unit.count(), 5);
  EXPECT_THROW(build_mask(4, 4, -0.1, Band::low), ArgumentError);
}

TEST(Mask, PartitionAndMonotonicity) {
  for (auto [m, n] : {std::pair{4, 4}, std::pair{7, 3}, std::pair{16, 9}}) {
    const double rmax = max_center_distance(m, n);
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> prev;
    for (double r = 0.0; r <= 1.0; r += 0.05) {
      const FreqMask lo = build_mask(m, n, r * rmax, Band::low);
      const FreqMask hi = build_mask(m, n, r * rmax, Band::high);
      EXPECT_TRUE(((lo.grid + hi.grid).array() == 1).all());
      if (prev.size()) EXPECT_TRUE((prev.array() <= lo.grid.array()).all());
      prev = lo.grid;
    }
  }
}

TEST(ApplyMask, IdentityZeroAndPartition) {
  std::mt19937_64 rng(6);
  const SpectralField s = fshift(dft2(random_matrix(6, 5, rng)));
  const FreqMask all = build_mask(6, 5, 100.0, Band::low);
  const FreqMask none = build_mask(6, 5, 100.0, Band::high);
  EXPECT_TRUE((apply_mask(s, all).values.array() == s.values.array()).all());
  EXPECT_EQ(apply_mask(s, none).values.cwiseAbs().maxCoeff(), 0.0);
  const SpectralField lo = apply_mask(s, build_mask(6, 5, 1.7, Band::low));
  const SpectralField hi = apply_mask(s, build_mask(6, 5, 1.7, Band::high));
  EXPECT_TRUE(lo.shifted);
  EXPECT_TRUE(((lo.values + hi.values).array() == s.values.array()).all());
  EXPECT_THROW(apply_mask(s, build_mask(5, 5, 1.0, Band::low)), ArgumentError);
  EXPECT_THROW(apply_mask(dft2(random_matrix(6, 5, rng)), all), StateError);
}

TEST(CircularConv, Examples) {
  const std::vector<double> x = {1, 2}, h = {3, 4};
  const auto y = circular_conv(x, h);
  EXPECT_NEAR(y[0], 11, 1e-12);
  EXPECT_NEAR(y[1], 10, 1e-12);

  std::mt19937_64 rng(7);
  const auto xs = random_vector(9, rng);
  std::vector<double> delta(9, 0.0);
  delta[0] = 1.0;
  const auto same = circular_conv(xs, delta);
  for (int i = 0; i < 9; ++i) EXPECT_NEAR(same[i], xs[i], 1e-12);

  const auto a = random_vector(7, rng), b = random_vector(7, rng);
  const auto fast = circular_conv(a, b);
  const auto slow = oracle::naive_circular_conv(a, b);
  for (int i = 0; i < 7; ++i) EXPECT_LT(std::abs(fast[i] - slow[i]), 1e-10);
  EXPECT_THROW(circular_conv(a, xs), ArgumentError);
}

// Randomized identity suite over shapes up to 64 x 64.
TEST(SpectralIdentities, RandomizedUpTo64) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 40; ++trial) {
    const int m = 1 + static_cast<int>(rng() % 64), n = 1 + static_cast<int>(rng() % 64);
    const Eigen::MatrixXd x = random_matrix(m, n, rng);
    const SpectralField f = dft2(x);
    EXPECT_LT((idft2(f) - x).cwiseAbs().maxCoeff(), 1e-9);
    const double energy = x.squaredNorm();
    EXPECT_LT(std::abs(f.values.squaredNorm() / (m * n) - energy) / energy, 1e-9);
    double asym = 0.0;
    for (int a = 0; a < m; ++a) {
      for (int b = 0; b < n; ++b) {
        asym = std::max(asym, std::abs(f.values(a, b) - std::conj(f.values((m - a) % m, (n - b) % n))));
      }
    }
    EXPECT_LT(asym, 1e-10 * std::max(1.0, f.values.cwiseAbs().maxCoeff()));

    const int len = 1 + static_cast<int>(rng() % 64);
    const auto xv = random_vector(len, rng), hv = random_vector(len, rng);
    const auto lhs = dft1(circular_conv(xv, hv));
    const auto fx = dft1(xv), fh = dft1(hv);
    for (int k = 0; k < len; ++k) EXPECT_LT(std::abs(lhs[k] - fx[k] * fh[k]), 1e-9 * len);
  }
}
