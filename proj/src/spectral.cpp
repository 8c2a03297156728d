#include "vpdiag/spectral.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace vpdiag::spectral {

Eigen::VectorXd power_spectrum(const Eigen::VectorXd& frame, int nfft) {
  Eigen::FFT<double> fft;
  std::vector<double> in(static_cast<std::size_t>(nfft), 0.0);
  const Eigen::Index n = std::min<Eigen::Index>(frame.size(), nfft);
  for (Eigen::Index i = 0; i < n; ++i) in[static_cast<std::size_t>(i)] = frame[i];
  std::vector<std::complex<double>> out;
  fft.fwd(out, in);
  Eigen::VectorXd power(nfft / 2 + 1);
  for (int k = 0; k <= nfft / 2; ++k) power[k] = std::norm(out[static_cast<std::size_t>(k)]);
  return power;
}

Eigen::MatrixXd power_spectrogram(const Eigen::VectorXd& samples, int frame_len,
                                  int hop, int nfft, Window window) {
  const Eigen::VectorXd w = make_window(window, frame_len);
  const Eigen::Index n = samples.size();
  const Eigen::Index count = frame_count(n, frame_len, hop);
  Eigen::MatrixXd out(count, nfft / 2 + 1);

  Eigen::FFT<double> fft;
  std::vector<double> in(static_cast<std::size_t>(nfft));
  std::vector<std::complex<double>> spec;
  for (Eigen::Index f = 0; f < count; ++f) {
    std::fill(in.begin(), in.end(), 0.0);
    const Eigen::Index start = f * hop;
    const Eigen::Index avail =
        std::min<Eigen::Index>({frame_len, n - start, nfft});
    for (Eigen::Index i = 0; i < avail; ++i) {
      in[static_cast<std::size_t>(i)] = samples[start + i] * w[i];
    }
    fft.fwd(spec, in);
    for (int k = 0; k <= nfft / 2; ++k) {
      out(f, k) = std::norm(spec[static_cast<std::size_t>(k)]);
    }
  }
  return out;
}

Eigen::VectorXd fft_autocorrelation(const Eigen::VectorXd& x, int max_lag) {
  int nfft = 1;
  while (nfft < x.size() + max_lag + 1) nfft <<= 1;
  Eigen::FFT<double> fft;
  std::vector<double> in(static_cast<std::size_t>(nfft), 0.0);
  for (Eigen::Index i = 0; i < x.size(); ++i) in[static_cast<std::size_t>(i)] = x[i];
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, in);
  for (auto& c : spec) c = std::norm(c);
  std::vector<double> back;
  fft.inv(back, spec);
  Eigen::VectorXd r(max_lag + 1);
  for (int k = 0; k <= max_lag; ++k) r[k] = back[static_cast<std::size_t>(k)];
  return r;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

double hz_to_bark(double hz) {
  return 13.0 * std::atan(0.00076 * hz) +
         3.5 * std::atan((hz / 7500.0) * (hz / 7500.0));
}

double bark_to_hz(double bark) {
  // hz_to_bark is monotone on [0, 24 kHz]; invert by bisection.
  double lo = 0.0, hi = 24000.0;
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    (hz_to_bark(mid) < bark ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Eigen::MatrixXd mel_filterbank(int n_mels, int nfft, int sample_rate,
                               double fmin, double fmax) {
  const int n_bins = nfft / 2 + 1;
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(n_mels, n_bins);
  const double mel_lo = hz_to_mel(fmin);
  const double mel_hi = hz_to_mel(fmax);
  std::vector<double> edges(static_cast<std::size_t>(n_mels + 2));
  for (int i = 0; i < n_mels + 2; ++i) {
    edges[static_cast<std::size_t>(i)] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));
  }
  for (int m = 0; m < n_mels; ++m) {
    const double left = edges[static_cast<std::size_t>(m)];
    const double centre = edges[static_cast<std::size_t>(m + 1)];
    const double right = edges[static_cast<std::size_t>(m + 2)];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / nfft;
      double w = 0.0;
      if (f > left && f <= centre) {
        w = (f - left) / (centre - left);
      } else if (f > centre && f < right) {
        w = (right - f) / (right - centre);
      }
      fb(m, k) = w;
    }
  }
  return fb;
}

Eigen::MatrixXd bark_band_matrix(int n_bands, int nfft, int sample_rate,
                                 double fmax) {
  const int n_bins = nfft / 2 + 1;
  const double bin_hz = static_cast<double>(sample_rate) / nfft;
  const double bark_max = hz_to_bark(fmax);
  Eigen::MatrixXd bands = Eigen::MatrixXd::Zero(n_bands, n_bins);
  for (int b = 0; b < n_bands; ++b) {
    const double lo = bark_to_hz(bark_max * b / n_bands);
    const double hi = bark_to_hz(bark_max * (b + 1) / n_bands);
    bool any = false;
    for (int k = 0; k < n_bins; ++k) {
      const double f = k * bin_hz;
      const bool last = b == n_bands - 1;
      if (f >= lo && (f < hi || (last && f <= hi))) {
        bands(b, k) = 1.0;
        any = true;
      }
    }
    if (!any) {
      const int k = std::clamp(
          static_cast<int>(std::lround(0.5 * (lo + hi) / bin_hz)), 0,
          n_bins - 1);
      bands(b, k) = 1.0;
    }
  }
  return bands;
}

Eigen::MatrixXd dct_matrix(int n_out, int n_in) {
  Eigen::MatrixXd d(n_out, n_in);
  for (int k = 0; k < n_out; ++k) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / n_in);
    for (int n = 0; n < n_in; ++n) {
      d(k, n) = scale * std::cos(std::numbers::pi * k * (n + 0.5) / n_in);
    }
  }
  return d;
}

double linear_slope(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() < 2) return 0.0;
  const double mx = x.mean();
  const double my = y.mean();
  const double sxx = (x.array() - mx).square().sum();
  if (sxx <= 0.0) return 0.0;
  return ((x.array() - mx) * (y.array() - my)).sum() / sxx;
}

double percentile(Eigen::VectorXd values, double p) {
  if (values.size() == 0) return 0.0;
  std::sort(values.data(), values.data() + values.size());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<Eigen::Index>(std::floor(pos));
  const Eigen::Index hi = std::min<Eigen::Index>(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

}  // namespace vpdiag::spectral
