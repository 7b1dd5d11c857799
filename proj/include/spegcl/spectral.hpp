#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

namespace spegcl {

using cplx = std::complex<double>;

/// Fast transform of a fixed length. Power-of-two lengths use an iterative
/// radix-2 kernel; other lengths go through Bluestein's chirp-z identity.
/// Both directions are unnormalized: inverse(forward(x)) == n * x.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n);

  std::size_t size() const { return n_; }
  void forward(std::span<cplx> data) const { run(data, false); }
  void backward(std::span<cplx> data) const { run(data, true); }

 private:
  void run(std::span<cplx> data, bool inverse) const;
  void radix2(std::span<cplx> data, bool inverse) const;

  std::size_t n_;
  std::size_t m_;                   // radix-2 working length
  std::vector<std::size_t> rev_;    // bit reversal for m_
  std::vector<cplx> twiddle_;       // exp(-2 pi i k / m_), k < m_/2
  std::vector<cplx> chirp_;         // exp(-i pi k^2 / n), Bluestein only
  std::vector<cplx> chirp_fft_;     // transformed conj chirp filter
};

/// Shared plan cache (one per thread).
const FftPlan& fft_plan(std::size_t n);

/// Unnormalized forward DFT of a sequence.
std::vector<cplx> dft1(std::span<const double> x);
std::vector<cplx> dft1(std::span<const cplx> x);
/// Inverse DFT, scaled by 1/L.
std::vector<cplx> idft1(std::span<const cplx> x);

/// Complex spectrum of a real M x N grid. Forward transform is unnormalized;
/// the inverse carries 1/(M N). `shifted` is true when the zero frequency has
/// been moved to (floor(M/2), floor(N/2)).
struct SpectralField {
  Eigen::MatrixXcd values;
  bool shifted = false;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

SpectralField dft2(const Eigen::MatrixXd& x);
Eigen::MatrixXcd dft2_complex(const Eigen::MatrixXcd& x);
Eigen::MatrixXcd idft2_complex(const Eigen::MatrixXcd& x);

/// Inverse transform back to a real grid. Requires an unshifted field whose
/// reconstruction is real: an imaginary residue above 1e-6 (relative to the
/// largest real entry, floor 1) is a StateError.
Eigen::MatrixXd idft2(const SpectralField& field);

/// Cyclic shift by (floor(M/2), floor(N/2)) and its exact inverse.
SpectralField fshift(const SpectralField& field);
SpectralField ifshift(const SpectralField& field);

struct AmplitudePhase {
  Eigen::MatrixXd power;      // R^2 + I^2, the amplitude as literally defined
  Eigen::MatrixXd magnitude;  // sqrt(R^2 + I^2)
  Eigen::MatrixXd phase;      // atan2(I, R); 0 at the origin
};

AmplitudePhase amplitude_phase(const SpectralField& field);

enum class Band { low, high };

/// Binary radial selector over a shifted spectrum. A cell is low iff its
/// distance to the center (floor(M/2), floor(N/2)) is <= d_low; the high
/// mask is the exact complement.
struct FreqMask {
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> grid;
  double d_low = 0.0;
  Band kind = Band::low;
  int center_row = 0;
  int center_col = 0;

  Eigen::Index count() const;
};

FreqMask build_mask(int m_rows, int n_cols, double d_low, Band kind);

/// Largest center distance for a grid, sqrt((M/2)^2 + (N/2)^2).
double max_center_distance(int m_rows, int n_cols);

SpectralField apply_mask(const SpectralField& field, const FreqMask& mask);

/// y[i] = sum_j x[j] h[(i - j) mod L], evaluated through the transform.
std::vector<double> circular_conv(std::span<const double> x, std::span<const double> h);

}  // namespace spegcl
