#pragma once

#include <Eigen/Dense>

#include "vpdiag/audio.hpp"

namespace vpdiag::spectral {

/// |STFT|^2, one frame per row, nfft/2 + 1 bins per frame. Frame count
/// follows frame_signal: 1 + floor((N - L) / H), inputs shorter than one
/// frame are zero-padded.
Eigen::MatrixXd power_spectrogram(const Eigen::VectorXd& samples, int frame_len,
                                  int hop, int nfft, Window window);

/// Power spectrum of one (already windowed) frame zero-padded to nfft.
Eigen::VectorXd power_spectrum(const Eigen::VectorXd& frame, int nfft);

/// Linear autocorrelation of x via FFT, lags 0..max_lag.
Eigen::VectorXd fft_autocorrelation(const Eigen::VectorXd& x, int max_lag);

double hz_to_mel(double hz);
double mel_to_hz(double mel);
double hz_to_bark(double hz);
double bark_to_hz(double bark);

/// Triangular HTK-style mel filterbank, n_mels x (nfft/2 + 1).
Eigen::MatrixXd mel_filterbank(int n_mels, int nfft, int sample_rate,
                               double fmin, double fmax);

/// Rectangular bands equally spaced on the Bark scale over [0, fmax],
/// n_bands x (nfft/2 + 1). Every band owns at least one FFT bin.
Eigen::MatrixXd bark_band_matrix(int n_bands, int nfft, int sample_rate,
                                 double fmax);

/// Orthonormal DCT-II matrix, n_out x n_in.
Eigen::MatrixXd dct_matrix(int n_out, int n_in);

/// Least-squares slope of y against x.
double linear_slope(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// Percentile with linear interpolation between order statistics, p in [0,1].
double percentile(Eigen::VectorXd values, double p);

}  // namespace vpdiag::spectral
