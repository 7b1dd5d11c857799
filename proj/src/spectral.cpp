#include "spegcl/spectral.hpp"

#include "spegcl/errors.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <numbers>

namespace spegcl {

namespace {

std::size_t next_pow2(std::size_t n) {
  std::size_t m = 1;
  while (m < n) m <<= 1;
  return m;
}

bool is_pow2(std::size_t n) { return n && !(n & (n - 1)); }

}  // namespace

FftPlan::FftPlan(std::size_t n) : n_(n) {
  if (n == 0) throw ArgumentError("transform length must be positive");
  m_ = is_pow2(n) ? n : next_pow2(2 * n - 1);

  rev_.resize(m_);
  int bits = 0;
  while ((std::size_t{1} << bits) < m_) ++bits;
  for (std::size_t i = 0; i < m_; ++i) {
    std::size_t r = 0;
    for (int b = 0; b < bits; ++b) r |= ((i >> b) & 1U) << (bits - 1 - b);
    rev_[i] = r;
  }
  twiddle_.resize(m_ / 2);
  for (std::size_t k = 0; k < m_ / 2; ++k) {
    const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(m_);
    twiddle_[k] = cplx(std::cos(ang), std::sin(ang));
  }

  if (m_ != n_) {
    chirp_.resize(n_);
    for (std::size_t k = 0; k < n_; ++k) {
      // k^2 mod 2n keeps the angle argument small and exact.
      const std::uint64_t kk = (static_cast<std::uint64_t>(k) * k) % (2 * n_);
      const double ang = -std::numbers::pi * static_cast<double>(kk) / static_cast<double>(n_);
      chirp_[k] = cplx(std::cos(ang), std::sin(ang));
    }
    chirp_fft_.assign(m_, cplx(0.0, 0.0));
    chirp_fft_[0] = std::conj(chirp_[0]);
    for (std::size_t k = 1; k < n_; ++k) {
      chirp_fft_[k] = std::conj(chirp_[k]);
      chirp_fft_[m_ - k] = std::conj(chirp_[k]);
    }
    radix2(chirp_fft_, false);
  }
}

void FftPlan::radix2(std::span<cplx> a, bool inverse) const {
  const std::size_t m = m_;
  for (std::size_t i = 0; i < m; ++i) {
    if (i < rev_[i]) std::swap(a[i], a[rev_[i]]);
  }
  for (std::size_t len = 2; len <= m; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = m / len;
    for (std::size_t start = 0; start < m; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        cplx w = twiddle_[k * stride];
        if (inverse) w = std::conj(w);
        const cplx t = w * a[start + k + half];
        a[start + k + half] = a[start + k] - t;
        a[start + k] += t;
      }
    }
  }
}

void FftPlan::run(std::span<cplx> data, bool inverse) const {
  if (data.size() != n_) throw ArgumentError("transform length mismatch");
  if (m_ == n_) {
    radix2(data, inverse);
    return;
  }
  // Bluestein: X_k = c_k * sum_j (x_j c_j) conj(c_{k-j}), c_k = exp(-i pi k^2/n).
  // The inverse transform is the conjugate of the forward transform of the
  // conjugated input.
  std::vector<cplx> work(m_, cplx(0.0, 0.0));
  for (std::size_t k = 0; k < n_; ++k) {
    const cplx x = inverse ? std::conj(data[k]) : data[k];
    work[k] = x * chirp_[k];
  }
  radix2(work, false);
  for (std::size_t k = 0; k < m_; ++k) work[k] *= chirp_fft_[k];
  radix2(work, true);
  const double scale = 1.0 / static_cast<double>(m_);
  for (std::size_t k = 0; k < n_; ++k) {
    const cplx y = work[k] * scale * chirp_[k];
    data[k] = inverse ? std::conj(y) : y;
  }
}

const FftPlan& fft_plan(std::size_t n) {
  thread_local std::map<std::size_t, std::unique_ptr<FftPlan>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<FftPlan>(n);
  return *slot;
}

std::vector<cplx> dft1(std::span<const double> x) {
  std::vector<cplx> out(x.begin(), x.end());
  fft_plan(out.size()).forward(out);
  return out;
}

std::vector<cplx> dft1(std::span<const cplx> x) {
  std::vector<cplx> out(x.begin(), x.end());
  fft_plan(out.size()).forward(out);
  return out;
}

std::vector<cplx> idft1(std::span<const cplx> x) {
  std::vector<cplx> out(x.begin(), x.end());
  fft_plan(out.size()).backward(out);
  const double scale = 1.0 / static_cast<double>(out.size());
  for (cplx& v : out) v *= scale;
  return out;
}

namespace {

// Applies the 1D transform along every row, then every column.
Eigen::MatrixXcd transform2(const Eigen::MatrixXcd& x, bool inverse) {
  if (x.rows() == 0 || x.cols() == 0) throw ArgumentError("transform of an empty matrix");
  Eigen::MatrixXcd out = x;
  const FftPlan& row_plan = fft_plan(static_cast<std::size_t>(x.cols()));
  const FftPlan& col_plan = fft_plan(static_cast<std::size_t>(x.rows()));
  std::vector<cplx> buf(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index c = 0; c < out.cols(); ++c) buf[c] = out(r, c);
    inverse ? row_plan.backward(buf) : row_plan.forward(buf);
    for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) = buf[c];
  }
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    // column-major storage: the column is contiguous
    std::span<cplx> col(out.col(c).data(), static_cast<std::size_t>(out.rows()));
    inverse ? col_plan.backward(col) : col_plan.forward(col);
  }
  if (inverse) out /= static_cast<double>(x.rows() * x.cols());
  return out;
}

}  // namespace

Eigen::MatrixXcd dft2_complex(const Eigen::MatrixXcd& x) { return transform2(x, false); }
Eigen::MatrixXcd idft2_complex(const Eigen::MatrixXcd& x) { return transform2(x, true); }

SpectralField dft2(const Eigen::MatrixXd& x) {
  if (x.size() == 0) throw ArgumentError("dft2 of an empty matrix");
  return SpectralField{transform2(x.cast<cplx>(), false), false};
}

Eigen::MatrixXd idft2(const SpectralField& field) {
  if (field.shifted) throw StateError("idft2 requires an unshifted field; call ifshift first");
  const Eigen::MatrixXcd rec = transform2(field.values, true);
  const double residue = rec.imag().cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, rec.real().cwiseAbs().maxCoeff());
  if (residue > 1e-6 * scale) {
    throw StateError("inverse transform has imaginary residue " + std::to_string(residue) +
                     "; field is not the spectrum of a real grid");
  }
  return rec.real();
}

namespace {

SpectralField roll(const SpectralField& f, Eigen::Index dr, Eigen::Index dc) {
  const Eigen::Index m = f.rows(), n = f.cols();
  SpectralField out{Eigen::MatrixXcd(m, n), f.shifted};
  for (Eigen::Index c = 0; c < n; ++c) {
    for (Eigen::Index r = 0; r < m; ++r) out.values((r + dr) % m, (c + dc) % n) = f.values(r, c);
  }
  return out;
}

}  // namespace

SpectralField fshift(const SpectralField& field) {
  if (field.shifted) throw StateError("field is already shifted");
  SpectralField out = roll(field, field.rows() / 2, field.cols() / 2);
  out.shifted = true;
  return out;
}

SpectralField ifshift(const SpectralField& field) {
  if (!field.shifted) throw StateError("field is not shifted");
  const Eigen::Index m = field.rows(), n = field.cols();
  SpectralField out = roll(field, m - m / 2, n - n / 2);
  out.shifted = false;
  return out;
}

AmplitudePhase amplitude_phase(const SpectralField& field) {
  AmplitudePhase ap;
  const Eigen::MatrixXd re = field.values.real();
  const Eigen::MatrixXd im = field.values.imag();
  ap.power = re.array().square() + im.array().square();
  ap.magnitude = ap.power.array().sqrt();
  ap.phase.resize(re.rows(), re.cols());
  for (Eigen::Index c = 0; c < re.cols(); ++c) {
    for (Eigen::Index r = 0; r < re.rows(); ++r) {
      ap.phase(r, c) = (re(r, c) == 0.0 && im(r, c) == 0.0) ? 0.0 : std::atan2(im(r, c), re(r, c));
    }
  }
  return ap;
}

Eigen::Index FreqMask::count() const {
  Eigen::Index total = 0;
  for (Eigen::Index i = 0; i < grid.size(); ++i) total += grid.data()[i];
  return total;
}

double max_center_distance(int m_rows, int n_cols) {
  const double a = m_rows / 2.0, b = n_cols / 2.0;
  return std::sqrt(a * a + b * b);
}

FreqMask build_mask(int m_rows, int n_cols, double d_low, Band kind) {
  if (m_rows < 1 || n_cols < 1) throw ArgumentError("mask dimensions must be positive");
  if (!(d_low >= 0.0)) throw ArgumentError("d_low must be non-negative");
  FreqMask mask;
  mask.d_low = d_low;
  mask.kind = kind;
  mask.center_row = m_rows / 2;
  mask.center_col = n_cols / 2;
  mask.grid.resize(m_rows, n_cols);
  for (int c = 0; c < n_cols; ++c) {
    for (int r = 0; r < m_rows; ++r) {
      const double dr = r - mask.center_row, dc = c - mask.center_col;
      const bool low = std::sqrt(dr * dr + dc * dc) <= d_low;
      mask.grid(r, c) = (low == (kind == Band::low)) ? 1 : 0;
    }
  }
  return mask;
}

SpectralField apply_mask(const SpectralField& field, const FreqMask& mask) {
  if (!field.shifted) throw StateError("masks apply to shifted fields; call fshift first");
  if (field.rows() != mask.grid.rows() || field.cols() != mask.grid.cols()) {
    throw ArgumentError("mask dimensions do not match the field");
  }
  SpectralField out{field.values, true};
  for (Eigen::Index i = 0; i < out.values.size(); ++i) {
    if (!mask.grid.data()[i]) out.values.data()[i] = cplx(0.0, 0.0);
  }
  return out;
}

std::vector<double> circular_conv(std::span<const double> x, std::span<const double> h) {
  if (x.size() != h.size()) throw ArgumentError("circular_conv needs equal lengths");
  if (x.empty()) throw ArgumentError("circular_conv of empty sequences");
  std::vector<cplx> fx = dft1(x);
  const std::vector<cplx> fh = dft1(h);
  for (std::size_t k = 0; k < fx.size(); ++k) fx[k] *= fh[k];
  const std::vector<cplx> y = idft1(fx);
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i].real();
  return out;
}

}  // namespace spegcl
