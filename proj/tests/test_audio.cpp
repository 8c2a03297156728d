#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "vpdiag/audio.hpp"
#include "vpdiag/error.hpp"

using namespace vpdiag;
using namespace vpdiag::testing;

namespace {

ErrorCode code_of(const std::filesystem::path& p) {
  try {
    read_wav(p);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected read_wav to throw");
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST_CASE("read_wav decodes 16-bit mono") {
  const auto dir = scratch_dir("audio_read");
  std::vector<unsigned char> payload(2 * 16000, 0);
  payload[2] = 0x00;
  payload[3] = 0x40;  // sample 1 = 16384 -> 0.5
  write_raw_wav(dir / "a.wav", 1, 1, 16000, 16, payload);
  const AudioBuffer b = read_wav(dir / "a.wav");
  CHECK(b.size() == 16000);
  CHECK(b.sample_rate == 16000);
  CHECK(b.samples[1] == doctest::Approx(0.5));
}

TEST_CASE("read_wav averages stereo channels") {
  const auto dir = scratch_dir("audio_stereo");
  std::vector<unsigned char> payload;
  for (int i = 0; i < 100; ++i) {
    payload.insert(payload.end(), {0x00, 0x40, 0x00, 0xC0});  // +0.5, -0.5
  }
  write_raw_wav(dir / "s.wav", 1, 2, 16000, 16, payload);
  const AudioBuffer b = read_wav(dir / "s.wav");
  CHECK(b.size() == 100);
  CHECK(b.samples.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("read_wav decodes 24-bit, 32-bit and float payloads") {
  const auto dir = scratch_dir("audio_depths");
  write_raw_wav(dir / "i24.wav", 1, 1, 8000, 24, {0x00, 0x00, 0x40});
  CHECK(read_wav(dir / "i24.wav").samples[0] == doctest::Approx(0.5));
  write_raw_wav(dir / "i32.wav", 1, 1, 8000, 32, {0x00, 0x00, 0x00, 0xC0});
  CHECK(read_wav(dir / "i32.wav").samples[0] == doctest::Approx(-0.5));
  write_raw_wav(dir / "f32.wav", 3, 1, 8000, 32, {0x00, 0x00, 0x80, 0x3E});
  CHECK(read_wav(dir / "f32.wav").samples[0] == doctest::Approx(0.25));
}

TEST_CASE("read_wav errors carry distinct codes") {
  const auto dir = scratch_dir("audio_errors");
  CHECK(code_of(dir / "nope.wav") == ErrorCode::kMissingFile);
  write_raw_wav(dir / "adpcm.wav", 2, 1, 16000, 4, {0, 0, 0, 0});
  CHECK(code_of(dir / "adpcm.wav") == ErrorCode::kUnsupportedCodec);
  write_raw_wav(dir / "empty.wav", 1, 1, 16000, 16, {});
  CHECK(code_of(dir / "empty.wav") == ErrorCode::kEmptyPayload);
}

TEST_CASE("write_wav silence and clipping") {
  const auto dir = scratch_dir("audio_write");
  AudioBuffer silence{Eigen::VectorXd::Zero(16000), 16000};
  write_wav(silence, dir / "z.wav");
  const AudioBuffer z = read_wav(dir / "z.wav");
  CHECK(z.size() == 16000);
  CHECK(z.samples.cwiseAbs().maxCoeff() == 0.0);

  AudioBuffer loud{Eigen::VectorXd::Constant(4, 1.5), 16000};
  loud.samples[1] = -3.0;
  write_wav(loud, dir / "c.wav");
  const AudioBuffer c = read_wav(dir / "c.wav");
  CHECK(std::abs(c.samples[0] - 1.0) <= std::ldexp(1.0, -15));
  CHECK(c.samples[1] == -1.0);

  CHECK_THROWS_AS(write_wav(silence, dir / "missing_dir" / "x.wav"), Error);
}

TEST_CASE("write/read round trip is bounded by 16-bit quantization") {
  const auto dir = scratch_dir("audio_roundtrip");
  AudioBuffer b = noise(5000, 11, 16000, 0.4);
  b.samples = b.samples.cwiseMax(-1.0).cwiseMin(1.0);
  b.samples[0] = 1.0;
  b.samples[1] = -1.0;
  write_wav(b, dir / "r.wav");
  const AudioBuffer r = read_wav(dir / "r.wav");
  REQUIRE(r.size() == b.size());
  CHECK((r.samples - b.samples).cwiseAbs().maxCoeff() <= std::ldexp(1.0, -15));
}

TEST_CASE("resample length arithmetic and identity") {
  const AudioBuffer one_second = sine(440.0, 1.0, 8000);
  const AudioBuffer up = resample(one_second, 16000);
  CHECK(up.size() == 16000);
  CHECK(up.sample_rate == 16000);

  const AudioBuffer same = resample(up, 16000);
  CHECK(same.samples == up.samples);

  const AudioBuffer from44 = resample(sine(440.0, 0.5, 44100), 16000);
  CHECK(std::abs(from44.duration_s() - 0.5) <= 1.0 / 16000);

  CHECK_THROWS_AS(resample(up, 12345), Error);
}

TEST_CASE("resample keeps a 1 kHz tone and suppresses images") {
  const AudioBuffer up = resample(sine(1000.0, 1.0, 8000), 16000);
  const Eigen::Index len = 4000;
  const Eigen::VectorXd seg =
      up.samples.segment(6000, len).cwiseProduct(blackman_harris(len));
  double peak_f = 0.0, peak = 0.0, worst_stop = 0.0;
  for (double f = 0.0; f <= 8000.0; f += 50.0) {
    const double m = dtft_magnitude(seg, f, 16000);
    if (m > peak) {
      peak = m;
      peak_f = f;
    }
    if (f >= 4300.0) worst_stop = std::max(worst_stop, m);
  }
  CHECK(peak_f == 1000.0);
  CHECK(20.0 * std::log10(worst_stop / peak) <= -60.0);
}

TEST_CASE("resample is linear") {
  const AudioBuffer x = noise(3000, 5, 22050);
  AudioBuffer scaled = x;
  scaled.samples *= -2.5;
  const AudioBuffer a = resample(x, 16000);
  const AudioBuffer b = resample(scaled, 16000);
  CHECK((b.samples + 2.5 * a.samples).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("frame_signal count and window application") {
  FrameSpec spec{20.0, 10.0, Window::kRectangular};
  AudioBuffer b{Eigen::VectorXd::Ones(400), 16000};
  const FrameMatrix frames = frame_signal(b, spec);
  CHECK(frames.rows() == 1);
  CHECK(frames.cols() == 320);
  CHECK(frames.minCoeff() == 1.0);

  AudioBuffer longer{Eigen::VectorXd::Ones(16000), 16000};
  CHECK(frame_signal(longer, spec).rows() == 1 + (16000 - 320) / 160);

  AudioBuffer tiny{Eigen::VectorXd::Ones(10), 16000};
  const FrameMatrix padded = frame_signal(tiny, spec);
  CHECK(padded.rows() == 1);
  CHECK(padded.row(0).head(10).minCoeff() == 1.0);
  CHECK(padded.row(0).tail(310).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("frame then overlap_add reconstructs the interior") {
  for (Window w : {Window::kHann, Window::kHamming}) {
    FrameSpec spec{20.0, 10.0, w};
    CHECK(is_cola(spec, 16000));
    const AudioBuffer x = noise(8000, 21);
    const AudioBuffer y =
        overlap_add(frame_signal(x, spec), spec, x.size(), 16000);
    const Eigen::Index lo = 320, hi = x.size() - 640;
    CHECK(rel_rms(y.samples.segment(lo, hi - lo),
                  x.samples.segment(lo, hi - lo)) <= 1e-6);
  }
  CHECK_FALSE(is_cola(FrameSpec{20.0, 15.0, Window::kHann}, 16000));
}

TEST_CASE("overlap_add edge cases") {
  FrameSpec spec{20.0, 10.0, Window::kHann};
  const Eigen::VectorXd w = make_window(Window::kHann, 320);

  FrameMatrix one(1, 320);
  one.row(0) = (0.3 * w).transpose();
  const AudioBuffer single = overlap_add(one, spec, 320, 16000);
  CHECK(single.samples.tail(319).minCoeff() == doctest::Approx(0.3));
  CHECK(single.samples.tail(319).maxCoeff() == doctest::Approx(0.3));

  const AudioBuffer zeros =
      overlap_add(FrameMatrix::Zero(5, 320), spec, 960, 16000);
  CHECK(zeros.size() == 960);
  CHECK(zeros.samples.cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(overlap_add(FrameMatrix::Zero(2, 100), spec, 300, 16000),
                  Error);
}
