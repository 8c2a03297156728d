#pragma once

#include <vector>

#include <Eigen/Dense>

#include "vpdiag/audio.hpp"

namespace vpdiag {

struct PitchOptions {
  double frame_ms = 40.0;
  double hop_ms = 10.0;
  double fmin = 60.0;
  double fmax = 400.0;
  double voicing_threshold = 0.3;
  /// Frames quieter than this fraction of the loudest frame's RMS are unvoiced.
  double silence_ratio = 0.03;
};

/// Frame-level F0 contour. f0 is 0 on unvoiced frames; voicing holds the
/// normalized autocorrelation peak clipped to [0, 1].
struct PitchTrack {
  Eigen::VectorXd f0;
  Eigen::VectorXd voicing;
  Eigen::VectorXd rms;
  double hop_s = 0.01;

  Eigen::Index frames() const { return f0.size(); }
  Eigen::Index voiced_count() const;
};

/// Windowed autocorrelation tracker, corrected by the window's own
/// autocorrelation. Among peaks within 0.9 of the best, the shortest lag wins.
PitchTrack track_pitch(const AudioBuffer& audio, const PitchOptions& opts = {});

/// Cycle-by-cycle period and amplitude measurements along voiced stretches.
struct CycleMeasures {
  std::vector<double> periods;     ///< seconds
  std::vector<double> amplitudes;  ///< peak-to-peak per cycle
  std::vector<int> chain;          ///< contiguous-walk id per cycle
  double jitter_local = 0.0;       ///< mean |T_i - T_{i-1}| / mean T
  double jitter_rap = 0.0;         ///< three-point relative average perturbation
  double shimmer_local = 0.0;      ///< mean |A_i - A_{i-1}| / mean A
  double shimmer_db = 0.0;         ///< mean |20 log10(A_i / A_{i-1})|
};

/// Pitch marks by waveform matching: from each mark, the next cycle start is
/// the lag in [0.75 T, 1.25 T] maximizing normalized cross-correlation of a
/// 0.6 T window around the mark, refined by parabolic interpolation. T comes
/// from the frame track for the first cycle of a chain and from the previous
/// cycle after that. Marks are tracked at
/// fractional positions so rounding does not accumulate.
CycleMeasures measure_cycles(const AudioBuffer& audio, const PitchTrack& track);

}  // namespace vpdiag
