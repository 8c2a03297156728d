#include "vpdiag/pitch.hpp"

#include <algorithm>
#include <cmath>

#include "vpdiag/spectral.hpp"

namespace vpdiag {

Eigen::Index PitchTrack::voiced_count() const {
  return (f0.array() > 0.0).count();
}

namespace {

// Vertex offset of the parabola through (-1, a), (0, b), (1, c).
double parabolic_offset(double a, double b, double c) {
  const double denom = a - 2.0 * b + c;
  if (denom >= 0.0) return 0.0;
  return std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
}

}  // namespace

PitchTrack track_pitch(const AudioBuffer& audio, const PitchOptions& opts) {
  const int rate = audio.sample_rate;
  const int len = static_cast<int>(std::lround(opts.frame_ms * rate / 1000.0));
  const int hop = static_cast<int>(std::lround(opts.hop_ms * rate / 1000.0));
  const int lag_min = static_cast<int>(std::floor(rate / opts.fmax));
  const int lag_max = static_cast<int>(std::ceil(rate / opts.fmin));
  const Eigen::Index n = audio.size();
  const Eigen::Index count = frame_count(n, len, hop);

  const Eigen::VectorXd window = make_window(Window::kHann, len);
  const Eigen::VectorXd rw = spectral::fft_autocorrelation(window, lag_max + 1);

  PitchTrack track;
  track.hop_s = static_cast<double>(hop) / rate;
  track.f0 = Eigen::VectorXd::Zero(count);
  track.voicing = Eigen::VectorXd::Zero(count);
  track.rms = Eigen::VectorXd::Zero(count);

  std::vector<Eigen::VectorXd> frames(static_cast<std::size_t>(count));
  for (Eigen::Index f = 0; f < count; ++f) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(len);
    const Eigen::Index start = f * hop;
    const Eigen::Index avail = std::min<Eigen::Index>(len, n - start);
    if (avail > 0) x.head(avail) = audio.samples.segment(start, avail);
    track.rms[f] = std::sqrt(x.squaredNorm() / len);
    frames[static_cast<std::size_t>(f)] = std::move(x);
  }
  const double loudest = count > 0 ? track.rms.maxCoeff() : 0.0;
  const double gate = std::max(1e-6, opts.silence_ratio * loudest);

  Eigen::VectorXd nr(lag_max + 2);
  for (Eigen::Index f = 0; f < count; ++f) {
    if (track.rms[f] < gate) continue;
    Eigen::VectorXd x = frames[static_cast<std::size_t>(f)];
    x.array() -= x.mean();
    x = x.cwiseProduct(window);
    const Eigen::VectorXd r = spectral::fft_autocorrelation(x, lag_max + 1);
    if (r[0] <= 0.0) continue;
    for (int k = 0; k <= lag_max + 1; ++k) nr[k] = (r[k] / r[0]) / (rw[k] / rw[0]);

    double best = -1.0;
    for (int k = lag_min; k <= lag_max; ++k) {
      if (nr[k] > nr[k - 1] && nr[k] >= nr[k + 1]) best = std::max(best, nr[k]);
    }
    if (best < opts.voicing_threshold) {
      track.voicing[f] = std::clamp(best, 0.0, 1.0);
      continue;
    }
    for (int k = lag_min; k <= lag_max; ++k) {
      if (nr[k] > nr[k - 1] && nr[k] >= nr[k + 1] && nr[k] >= 0.9 * best) {
        const double lag = k + parabolic_offset(nr[k - 1], nr[k], nr[k + 1]);
        track.f0[f] = rate / lag;
        track.voicing[f] = std::clamp(nr[k], 0.0, 1.0);
        break;
      }
    }
  }
  return track;
}

namespace {

double ncc(const Eigen::VectorXd& x, Eigen::Index a, Eigen::Index b, Eigen::Index w) {
  const auto s = x.segment(a, w);
  const auto t = x.segment(b, w);
  const double den = std::sqrt(s.squaredNorm() * t.squaredNorm());
  return den > 0.0 ? s.dot(t) / den : 0.0;
}

}  // namespace

CycleMeasures measure_cycles(const AudioBuffer& audio, const PitchTrack& track) {
  CycleMeasures out;
  const Eigen::VectorXd& x = audio.samples;
  const double rate = audio.sample_rate;
  const double hop = track.hop_s * rate;
  const Eigen::Index n = x.size();

  auto f0_at = [&](double t) {
    const auto f = static_cast<Eigen::Index>(std::floor(t / hop));
    if (f < 0 || f >= track.frames()) return 0.0;
    return track.f0[f];
  };

  int chain = 0;
  Eigen::Index f = 0;
  while (f < track.frames()) {
    if (track.f0[f] <= 0.0) {
      ++f;
      continue;
    }
    Eigen::Index run_end = f;
    while (run_end + 1 < track.frames() && track.f0[run_end + 1] > 0.0) ++run_end;
    const double stop = std::min<double>(static_cast<double>(n), (run_end + 1) * hop + 3 * hop);

    // First mark on the largest sample of the first period.
    double t = f * hop;
    {
      const auto w = static_cast<Eigen::Index>(std::lround(rate / track.f0[f]));
      const auto a = static_cast<Eigen::Index>(t);
      if (a + w <= n) {
        Eigen::Index arg = 0;
        x.segment(a, w).maxCoeff(&arg);
        t = static_cast<double>(a + arg);
      }
    }

    bool linked = false;
    double last_lag = 0.0;
    for (;;) {
      double f0 = f0_at(t);
      if (f0 <= 0.0) f0 = track.f0[f];
      // Inside a chain the previous cycle is the reference, so isolated
      // octave errors in the frame track cannot pull the search window.
      const double period = linked ? last_lag : rate / f0;
      // Matching window: 60% of a period starting 20% before the mark, so
      // each comparison sees one excitation rather than a whole period.
      const auto w = static_cast<Eigen::Index>(std::lround(0.6 * period));
      const auto lo = static_cast<Eigen::Index>(std::floor(0.75 * period));
      const auto hi = static_cast<Eigen::Index>(std::ceil(1.25 * period));
      const auto a = static_cast<Eigen::Index>(std::lround(t));
      const Eigen::Index start = std::max<Eigen::Index>(0, a - static_cast<Eigen::Index>(std::lround(0.2 * period)));
      if (start + hi + 1 + w > static_cast<Eigen::Index>(stop) || start + hi + 1 + w > n) break;

      Eigen::Index best_lag = lo;
      double best = -2.0;
      Eigen::VectorXd c(hi - lo + 3);
      for (Eigen::Index k = lo - 1; k <= hi + 1; ++k) {
        c[k - lo + 1] = ncc(x, start, start + k, w);
      }
      for (Eigen::Index k = lo; k <= hi; ++k) {
        if (c[k - lo + 1] > best) {
          best = c[k - lo + 1];
          best_lag = k;
        }
      }
      if (best < 0.5 || best_lag == lo || best_lag == hi) {
        // Lost the cycle; resume one period later as a new chain.
        t += period;
        if (linked) ++chain;
        linked = false;
        continue;
      }
      const Eigen::Index i = best_lag - lo + 1;
      const double lag = best_lag + parabolic_offset(c[i - 1], c[i], c[i + 1]);
      const auto seg = x.segment(a, best_lag);
      out.periods.push_back(lag / rate);
      out.amplitudes.push_back(seg.maxCoeff() - seg.minCoeff());
      out.chain.push_back(chain);
      linked = true;
      last_lag = lag;
      t += lag;
    }
    ++chain;
    f = run_end + 1;
  }

  double sum_t = 0.0, sum_a = 0.0, d_t = 0.0, d_a = 0.0, d_db = 0.0, rap = 0.0;
  std::size_t pairs = 0, triples = 0;
  for (std::size_t i = 0; i < out.periods.size(); ++i) {
    sum_t += out.periods[i];
    sum_a += out.amplitudes[i];
    if (i >= 1 && out.chain[i] == out.chain[i - 1]) {
      d_t += std::abs(out.periods[i] - out.periods[i - 1]);
      d_a += std::abs(out.amplitudes[i] - out.amplitudes[i - 1]);
      if (out.amplitudes[i] > 0.0 && out.amplitudes[i - 1] > 0.0) {
        d_db += std::abs(20.0 * std::log10(out.amplitudes[i] / out.amplitudes[i - 1]));
      }
      ++pairs;
    }
    if (i >= 1 && i + 1 < out.periods.size() && out.chain[i - 1] == out.chain[i] &&
        out.chain[i + 1] == out.chain[i]) {
      const double avg = (out.periods[i - 1] + out.periods[i] + out.periods[i + 1]) / 3.0;
      rap += std::abs(out.periods[i] - avg);
      ++triples;
    }
  }
  if (pairs > 0) {
    const double cycles = static_cast<double>(out.periods.size());
    const double mean_t = sum_t / cycles;
    const double mean_a = sum_a / cycles;
    out.jitter_local = (d_t / pairs) / mean_t;
    out.shimmer_local = mean_a > 0.0 ? (d_a / pairs) / mean_a : 0.0;
    out.shimmer_db = d_db / pairs;
    if (triples > 0) out.jitter_rap = (rap / triples) / mean_t;
  }
  return out;
}

}  // namespace vpdiag
