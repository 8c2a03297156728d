#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include "test_support.hpp"
#include "vpdiag/error.hpp"
#include "vpdiag/features.hpp"
#include "vpdiag/lpc.hpp"
#include "vpdiag/pitch.hpp"

using namespace vpdiag;
using namespace vpdiag::testing;

namespace {

const double kFloorLog = std::log(1e-10);

// Naive sawtooth with a pitch contour, f(t) linear from f_start to f_end.
AudioBuffer sawtooth(double f_start, double f_end, double seconds, double amp = 0.4) {
  AudioBuffer b;
  const auto n = static_cast<Eigen::Index>(seconds * 16000);
  b.samples.resize(n);
  double phase = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double f = f_start + (f_end - f_start) * i / static_cast<double>(n);
    phase += f / 16000.0;
    phase -= std::floor(phase);
    b.samples[i] = amp * (2.0 * phase - 1.0);
  }
  return b;
}

// Pulse train with the given integer periods (cycled) through one resonance.
AudioBuffer pulses(const std::vector<int>& periods, double seconds) {
  AudioBuffer b;
  const auto n = static_cast<Eigen::Index>(seconds * 16000);
  b.samples = Eigen::VectorXd::Zero(n);
  Eigen::Index t = 0;
  for (std::size_t k = 0; t < n; ++k) {
    b.samples[t] = 1.0;
    t += periods[k % periods.size()];
  }
  const auto r = std::polar(0.95, 2 * std::numbers::pi * 700 / 16000);
  Eigen::VectorXd a(2);
  a << 2 * r.real(), -std::norm(r);
  b.samples = synthesis_filter<double>(a, b.samples);
  b.samples *= 0.5 / b.samples.cwiseAbs().maxCoeff();
  return b;
}

AudioBuffer voiced_with_noise(std::uint64_t seed) {
  AudioBuffer b = sawtooth(110, 140, 1.5);
  b.samples += noise(b.size(), seed, 16000, 0.02).samples;
  return b;
}

}  // namespace

TEST_CASE("fixed-shape log-mel has 998 frames of 64 bins") {
  LogMelParams p;
  p.fixed_shape = true;
  const Spectrogram s = log_mel_spectrogram(noise(3 * 16000, 1), p);
  CHECK(s.values.rows() >= 997);
  CHECK(s.values.rows() <= 999);
  CHECK(s.values.cols() == 64);
  CHECK(s.values.allFinite());

  const Spectrogram plain = log_mel_spectrogram(noise(3 * 16000, 1));
  CHECK(plain.values.rows() == 1 + (48000 - 400) / 160);
}

TEST_CASE("silence gives the log floor everywhere") {
  const AudioBuffer silent{Eigen::VectorXd::Zero(16000), 16000};
  const Spectrogram s = log_mel_spectrogram(silent);
  CHECK(s.values.minCoeff() == kFloorLog);
  CHECK(s.values.maxCoeff() == kFloorLog);
  const FeatureVector m = msr_features(silent);
  CHECK(m.values.size() == 184);
  CHECK(m.values.minCoeff() == kFloorLog);
  CHECK(m.values.maxCoeff() == kFloorLog);
}

TEST_CASE("1 kHz tone peaks in the mel band whose triangle covers 1 kHz most") {
  const Spectrogram s = log_mel_spectrogram(sine(1000, 1.0, 16000));
  Eigen::Index arg = 0;
  s.values.colwise().mean().maxCoeff(&arg);

  // Triangle weights at 1 kHz from band edges equally spaced in mel.
  auto mel = [](double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); };
  const double step = mel(8000.0) / 65.0;
  const double m1k = mel(1000.0);
  int expected = -1;
  double best = 0.0;
  for (int m = 0; m < 64; ++m) {
    const double w = 1.0 - std::abs(m1k - (m + 1) * step) / step;
    if (w > best) {
      best = w;
      expected = m;
    }
  }
  CHECK(arg == expected);
}

TEST_CASE("deltas of constant and linear spectrograms") {
  Spectrogram flat;
  flat.values = Eigen::MatrixXd::Constant(12, 4, 3.5);
  const Spectrogram d = add_deltas(flat);
  CHECK(d.values.cols() == 12);
  CHECK(d.delta_order == 2);
  CHECK(d.values.rightCols(8).cwiseAbs().maxCoeff() == 0.0);

  Spectrogram ramp;
  ramp.values.resize(20, 3);
  for (int t = 0; t < 20; ++t) ramp.values.row(t).setConstant(0.25 * t - 1.0);
  const Spectrogram r = add_deltas(ramp);
  for (int t = 2; t < 18; ++t) {
    CHECK(r.values.block(t, 3, 1, 3).cwiseAbs().maxCoeff() == doctest::Approx(0.25));
    CHECK(r.values.block(t, 3, 1, 3).minCoeff() == doctest::Approx(0.25));
  }
  for (int t = 4; t < 16; ++t) {
    CHECK(r.values.block(t, 6, 1, 3).cwiseAbs().maxCoeff() <= 1e-12);
  }
  CHECK_THROWS_AS(add_deltas(r), Error);
}

TEST_CASE("deltas match the regression formula") {
  for (int frames : {30, 4, 3, 1}) {
    Rng rng(static_cast<std::uint64_t>(frames));
    Spectrogram s;
    s.values.resize(frames, 5);
    for (Eigen::Index i = 0; i < s.values.size(); ++i) s.values.data()[i] = rng.normal();
    const Spectrogram d = add_deltas(s);

    const int reach = std::min(2, (frames - 1) / 2);
    auto oracle = [&](const Eigen::MatrixXd& c) {
      Eigen::MatrixXd out = Eigen::MatrixXd::Zero(c.rows(), c.cols());
      if (reach == 0) return out;
      const double denom = reach == 2 ? 10.0 : 2.0;
      for (int t = 0; t < frames; ++t) {
        for (int j = 0; j < c.cols(); ++j) {
          double acc = 0.0;
          for (int k = 1; k <= reach; ++k) {
            acc += k * (c(std::min(t + k, frames - 1), j) - c(std::max(t - k, 0), j));
          }
          out(t, j) = acc / denom;
        }
      }
      return out;
    };
    const Eigen::MatrixXd d1 = oracle(s.values);
    const Eigen::MatrixXd d2 = oracle(d1);
    CHECK((d.values.leftCols(5) - s.values).cwiseAbs().maxCoeff() == 0.0);
    CHECK((d.values.middleCols(5, 5) - d1).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((d.values.rightCols(5) - d2).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("MSR length is 184 for any input") {
  for (double seconds : {0.05, 0.4, 2.3}) {
    const FeatureVector v = msr_features(noise(static_cast<Eigen::Index>(seconds * 16000), 5));
    CHECK(v.values.size() == 184);
    CHECK(v.values.allFinite());
    CHECK(v.kind == FeatureKind::kMsr);
  }
}

TEST_CASE("AM tone peaks at its acoustic and modulation bands") {
  AudioBuffer am = sine(1000, 3.0, 16000, 1.0);
  for (Eigen::Index i = 0; i < am.size(); ++i) {
    am.samples[i] *= 0.3 * (1.0 + 0.9 * std::sin(2 * std::numbers::pi * 4.0 * i / 16000));
  }
  const FeatureVector v = msr_features(am);
  Eigen::Index arg = 0;
  v.values.maxCoeff(&arg);

  // Bark of 1 kHz over 23 equal Bark bands up to 8 kHz.
  auto bark = [](double f) {
    return 13.0 * std::atan(0.00076 * f) + 3.5 * std::atan(std::pow(f / 7500.0, 2));
  };
  const int band = static_cast<int>(std::floor(bark(1000.0) / (bark(8000.0) / 23.0)));
  // Centres 4 * 32^(i/7); band i spans the geometric midpoints around centre i.
  int mod = -1;
  for (int i = 0; i < 8; ++i) {
    const double c = 4.0 * std::pow(32.0, i / 7.0);
    const double half = std::pow(32.0, 0.5 / 7.0);
    if (4.0 >= c / half && 4.0 < c * half) mod = i;
  }
  REQUIRE(mod == 0);
  CHECK(arg / 8 == band);
  CHECK(arg % 8 == mod);
}

TEST_CASE("MSR is invariant to gain") {
  const AudioBuffer x = voiced_with_noise(3);
  AudioBuffer y = x;
  y.samples *= 0.25;
  const FeatureVector a = msr_features(x);
  const FeatureVector b = msr_features(y);
  CHECK((a.values - b.values).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("compact LLD layout and determinism") {
  const AudioBuffer x = voiced_with_noise(4);
  const FeatureVector a = compact_llds(x);
  const FeatureVector b = compact_llds(x);
  CHECK(a.values.size() == 130);
  CHECK(a.values.allFinite());
  CHECK(a.values == b.values);
  CHECK(a.values[lld::kVoicedFraction] > 0.8);
  CHECK_NOTHROW(a.validate());
}

TEST_CASE("doubling amplitude only moves the energy level entries") {
  const AudioBuffer x = voiced_with_noise(5);
  AudioBuffer y = x;
  y.samples *= 2.0;
  const FeatureVector a = compact_llds(x);
  const FeatureVector b = compact_llds(y);
  for (int i = 0; i < lld::kLength; ++i) {
    const bool level = i == lld::kLogEnergyBegin || i == lld::kLogEnergyBegin + 2 ||
                       i == lld::kLogEnergyBegin + 3;
    if (level) {
      CHECK(b.values[i] - a.values[i] == doctest::Approx(std::log(4.0)).epsilon(1e-9));
    } else {
      INFO("entry " << i);
      CHECK(std::abs(b.values[i] - a.values[i]) <= 1e-8 * (1.0 + std::abs(a.values[i])));
    }
  }
}

TEST_CASE("unvoiced input reports zero F0 functionals") {
  const AudioBuffer silent{Eigen::VectorXd::Zero(8000), 16000};
  const FeatureVector v = compact_llds(silent);
  CHECK(v.values.segment<5>(lld::kF0Begin).cwiseAbs().maxCoeff() == 0.0);
  CHECK(v.values[lld::kVoicedFraction] == 0.0);
  CHECK(v.values.allFinite());
  const FeatureVector p = prosodic_f0_features(silent);
  CHECK(p.values[4] == 0.0);
  CHECK(p.values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("F0 of a 150 Hz sawtooth") {
  const FeatureVector p = prosodic_f0_features(sawtooth(150, 150, 2.0));
  CHECK(p.values.size() == kProsodicLength);
  CHECK(std::abs(p.values[0] - 150.0) <= 3.0);
  CHECK(p.values[4] > 0.9);
}

TEST_CASE("rising pitch gives a positive slope close to the true rate") {
  const FeatureVector p = prosodic_f0_features(sawtooth(120, 180, 2.0));
  CHECK(p.values[3] > 0.0);
  CHECK(p.values[3] == doctest::Approx(30.0).epsilon(0.15));
}

TEST_CASE("cycle measures on pulse trains with known periods") {
  const AudioBuffer steady = pulses({100}, 1.0);
  const CycleMeasures s = measure_cycles(steady, track_pitch(steady));
  CHECK(s.periods.size() > 100);
  CHECK(s.jitter_local <= 1e-3);
  CHECK(s.shimmer_local <= 1e-2);

  // Alternating 100/104: mean |dT| = 4 over mean T = 102.
  const AudioBuffer alternating = pulses({100, 104}, 1.0);
  const CycleMeasures a = measure_cycles(alternating, track_pitch(alternating));
  CHECK(a.jitter_local == doctest::Approx(4.0 / 102.0).epsilon(0.1));
}

TEST_CASE("proxy embedding is unit norm and self-similar") {
  const AudioBuffer x = voiced_with_noise(6);
  const FeatureVector e = proxy_speaker_embedding(x);
  CHECK(e.values.size() == 51);
  CHECK(std::abs(e.values.norm() - 1.0) <= 1e-9);
  CHECK(e.values.dot(proxy_speaker_embedding(x).values) == doctest::Approx(1.0).epsilon(1e-12));
  const AudioBuffer silent{Eigen::VectorXd::Zero(4000), 16000};
  CHECK(std::abs(proxy_speaker_embedding(silent).values.norm() - 1.0) <= 1e-9);
}

TEST_CASE("phoneme feature ingestion") {
  const auto dir = scratch_dir("phoneme");
  {
    std::ofstream f(dir / "ok.csv");
    f << "utterance_id,n_mispronunciations,n_pauses,phonemes_per_second\n"
      << "u1,2,5,3.4\n"
      << "u9,0,1,4.0\n";
  }
  const std::set<std::string> known = {"u1", "u2"};
  const PhonemeIngest ok = ingest_phoneme_features(dir / "ok.csv", &known);
  REQUIRE(ok.vectors.size() == 2);
  CHECK(ok.vectors[0].utterance_id == "u1");
  CHECK(ok.vectors[0].values == Eigen::Vector3d(2, 5, 3.4));
  CHECK(ok.vectors[0].kind == FeatureKind::kPhoneme);
  REQUIRE(ok.unknown_ids.size() == 1);
  CHECK(ok.unknown_ids[0] == "u9");

  { std::ofstream f(dir / "empty.csv"); }
  const PhonemeIngest empty = ingest_phoneme_features(dir / "empty.csv");
  CHECK(empty.vectors.empty());
  CHECK(empty.warnings.size() == 1);

  {
    std::ofstream f(dir / "dup.csv");
    f << "utterance_id,n_mispronunciations,n_pauses,phonemes_per_second\n"
      << "u1,2,5,3.4\nu1,1,1,1\n";
  }
  try {
    ingest_phoneme_features(dir / "dup.csv");
    FAIL("duplicate accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDuplicateId);
    CHECK(std::string(e.what()).find("u1") != std::string::npos);
  }

  {
    std::ofstream f(dir / "missing.csv");
    f << "utterance_id,n_pauses,phonemes_per_second\nu1,5,3.4\n";
  }
  CHECK_THROWS_AS(ingest_phoneme_features(dir / "missing.csv"), Error);
}

TEST_CASE("feature file round trip is exact") {
  const auto dir = scratch_dir("featfile");
  std::vector<FeatureVector> rows;
  for (int i = 0; i < 3; ++i) {
    FeatureVector v = msr_features(noise(8000, static_cast<std::uint64_t>(i)));
    v.utterance_id = "utt" + std::to_string(i);
    v.anonymization_tag = i == 2 ? "external:ling-gan" : "mcadams";
    v.dataset_id = "synth";
    if (i > 0) v.label = i == 1 ? Label::kPositive : Label::kNegative;
    rows.push_back(v);
  }
  write_feature_file(dir / "f.csv", rows);
  const std::vector<FeatureVector> back = read_feature_file(dir / "f.csv");
  REQUIRE(back.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(back[i].values == rows[i].values);
    CHECK(back[i].utterance_id == rows[i].utterance_id);
    CHECK(back[i].anonymization_tag == rows[i].anonymization_tag);
    CHECK(back[i].label == rows[i].label);
  }
  CHECK(stack_features(back).rows() == 3);
}

TEST_CASE("feature vectors reject bad tags and lengths") {
  FeatureVector v;
  v.kind = FeatureKind::kPhoneme;
  v.values = Eigen::Vector3d(1, 2, 3);
  v.anonymization_tag = "";
  CHECK_THROWS_AS(v.validate(), Error);
  v.anonymization_tag = "external:";
  CHECK_THROWS_AS(v.validate(), Error);
  v.anonymization_tag = "clean";
  CHECK_NOTHROW(v.validate());
  v.values = Eigen::Vector2d(1, 2);
  CHECK_THROWS_AS(v.validate(), Error);
}
