#include "vpdiag/audio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <vector>

#include "vpdiag/error.hpp"

namespace vpdiag {

namespace {

constexpr std::array<int, 5> kSupportedRates = {8000, 16000, 22050, 44100,
                                                48000};

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xff);
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(v & 0xff);
  out.push_back((v >> 8) & 0xff);
}

// Zeroth-order modified Bessel function of the first kind (power series).
double bessel_i0(double x) {
  double sum = 1.0;
  double term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 64; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

constexpr double kKaiserBeta = 7.857;  // ~80 dB sidelobe attenuation
constexpr int kZeroCrossings = 32;
constexpr double kRolloff = 0.9;

}  // namespace

int FrameSpec::frame_len(int sample_rate) const {
  return static_cast<int>(std::lround(frame_len_ms * sample_rate / 1000.0));
}

int FrameSpec::hop(int sample_rate) const {
  return static_cast<int>(std::lround(hop_ms * sample_rate / 1000.0));
}

bool is_supported_rate(int sample_rate) {
  return std::find(kSupportedRates.begin(), kSupportedRates.end(),
                   sample_rate) != kSupportedRates.end();
}

Eigen::VectorXd make_window(Window window, int length) {
  Eigen::VectorXd w(length);
  const double two_pi = 2.0 * std::numbers::pi;
  for (int n = 0; n < length; ++n) {
    const double phase = two_pi * n / length;
    switch (window) {
      case Window::kRectangular:
        w[n] = 1.0;
        break;
      case Window::kHann:
        w[n] = 0.5 - 0.5 * std::cos(phase);
        break;
      case Window::kHamming:
        w[n] = 0.54 - 0.46 * std::cos(phase);
        break;
    }
  }
  return w;
}

bool is_cola(const FrameSpec& spec, int sample_rate) {
  const int len = spec.frame_len(sample_rate);
  const int hop = spec.hop(sample_rate);
  if (hop <= 0 || hop > len) return false;
  const Eigen::VectorXd w = make_window(spec.window, len);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(hop);
  for (int n = 0; n < len; ++n) acc[n % hop] += w[n];
  const double mean = acc.mean();
  return (acc.array() - mean).abs().maxCoeff() <= 1e-6 * std::abs(mean);
}

Eigen::Index frame_count(Eigen::Index n_samples, int frame_len, int hop) {
  if (n_samples <= frame_len) return 1;
  return 1 + (n_samples - frame_len) / hop;
}

AudioBuffer read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kMissingFile,
                "cannot open audio file: " + path.string());
  }
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error(ErrorCode::kUnsupportedCodec,
                "not a RIFF/WAVE file: " + path.string());
  }

  int format = -1;
  int channels = 0;
  int rate = 0;
  int bits = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t len = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min<std::size_t>(len, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0 && avail >= 16) {
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = static_cast<int>(read_u32(chunk + 12));
      bits = read_u16(chunk + 22);
      // WAVE_FORMAT_EXTENSIBLE: the real format tag leads the subformat GUID.
      if (format == 0xFFFE && avail >= 26) format = read_u16(chunk + 32);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = avail;
    }
    pos = body + len + (len & 1);
  }

  const bool pcm_int = format == 1 && (bits == 16 || bits == 24 || bits == 32);
  const bool pcm_float = format == 3 && bits == 32;
  if (!(pcm_int || pcm_float) || channels < 1 || channels > 2 || rate <= 0) {
    throw Error(ErrorCode::kUnsupportedCodec,
                "unsupported WAV encoding (format " + std::to_string(format) +
                    ", " + std::to_string(bits) + " bit, " +
                    std::to_string(channels) + " ch): " + path.string());
  }
  const int bytes_per_sample = bits / 8;
  const std::size_t frame_bytes =
      static_cast<std::size_t>(bytes_per_sample) * channels;
  const std::size_t n_frames = data ? data_len / frame_bytes : 0;
  if (n_frames == 0) {
    throw Error(ErrorCode::kEmptyPayload,
                "WAV file has no samples: " + path.string());
  }

  AudioBuffer out;
  out.sample_rate = rate;
  out.samples.resize(static_cast<Eigen::Index>(n_frames));
  for (std::size_t i = 0; i < n_frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const unsigned char* p = data + i * frame_bytes + c * bytes_per_sample;
      double v = 0.0;
      if (pcm_float) {
        float f;
        std::uint32_t raw = read_u32(p);
        std::memcpy(&f, &raw, sizeof f);
        v = f;
      } else if (bits == 16) {
        v = static_cast<std::int16_t>(read_u16(p)) / 32768.0;
      } else if (bits == 24) {
        std::int32_t s = p[0] | (p[1] << 8) | (p[2] << 16);
        if (s & 0x800000) s -= 0x1000000;
        v = s / 8388608.0;
      } else {
        v = static_cast<std::int32_t>(read_u32(p)) / 2147483648.0;
      }
      acc += v;
    }
    out.samples[static_cast<Eigen::Index>(i)] = acc / channels;
  }
  return out;
}

void write_wav(const AudioBuffer& buffer, const std::filesystem::path& path) {
  const auto n = static_cast<std::uint32_t>(buffer.size());
  std::vector<unsigned char> out;
  out.reserve(44 + 2 * static_cast<std::size_t>(n));
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + 2 * n);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(buffer.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(buffer.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, 2 * n);
  for (Eigen::Index i = 0; i < buffer.size(); ++i) {
    const double x = std::clamp(buffer.samples[i], -1.0, 1.0);
    const long q = std::clamp(std::lround(x * 32768.0), -32768L, 32767L);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) {
    throw Error(ErrorCode::kUnwritablePath,
                "cannot write audio file: " + path.string());
  }
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) {
    throw Error(ErrorCode::kUnwritablePath,
                "short write to audio file: " + path.string());
  }
}

AudioBuffer load_canonical(const std::filesystem::path& path) {
  return resample(read_wav(path), kCanonicalRate);
}

AudioBuffer resample(const AudioBuffer& buffer, int target_rate) {
  if (!is_supported_rate(target_rate) ||
      !is_supported_rate(buffer.sample_rate)) {
    throw Error(ErrorCode::kUnsupportedRate,
                "unsupported resampling " + std::to_string(buffer.sample_rate) +
                    " -> " + std::to_string(target_rate) + " Hz");
  }
  if (target_rate == buffer.sample_rate) return buffer;

  const long g = std::gcd(target_rate, buffer.sample_rate);
  const long up = target_rate / g;
  const long down = buffer.sample_rate / g;

  // Cutoff in cycles per input sample and filter half-width in input samples.
  const double fc =
      0.5 * kRolloff * std::min(1.0, static_cast<double>(up) / down);
  const double half_width = kZeroCrossings / (2.0 * fc);
  const int taps = static_cast<int>(std::ceil(half_width)) + 1;

  // table(phase, j) = h(phase/up + j - taps + 1): tap applied to input sample
  // base - j + taps - 1 when producing an output at base + phase/up.
  Eigen::MatrixXd table(up, 2 * taps);
  const double i0_beta = bessel_i0(kKaiserBeta);
  for (long phase = 0; phase < up; ++phase) {
    for (int j = 0; j < 2 * taps; ++j) {
      const double t = static_cast<double>(phase) / up + (j - taps + 1);
      double h = 0.0;
      if (std::abs(t) < half_width) {
        const double x = 2.0 * fc * t;
        const double sinc =
            x == 0.0 ? 1.0
                     : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
        const double r = t / half_width;
        const double kaiser =
            bessel_i0(kKaiserBeta * std::sqrt(1.0 - r * r)) / i0_beta;
        h = 2.0 * fc * sinc * kaiser;
      }
      table(phase, j) = h;
    }
  }

  const Eigen::Index n_in = buffer.size();
  const Eigen::Index n_out = (n_in * up + down - 1) / down;
  AudioBuffer out;
  out.sample_rate = target_rate;
  out.samples.setZero(n_out);
  for (Eigen::Index n = 0; n < n_out; ++n) {
    const long long pos = static_cast<long long>(n) * down;
    const long long base = pos / up;
    const long phase = static_cast<long>(pos % up);
    double acc = 0.0;
    for (int j = 0; j < 2 * taps; ++j) {
      const long long k = base - (j - taps + 1);
      if (k < 0 || k >= n_in) continue;
      acc += table(phase, j) * buffer.samples[static_cast<Eigen::Index>(k)];
    }
    out.samples[n] = acc;
  }
  return out;
}

FrameMatrix frame_signal(const AudioBuffer& buffer, const FrameSpec& spec) {
  const int len = spec.frame_len(buffer.sample_rate);
  const int hop = spec.hop(buffer.sample_rate);
  if (len <= 0 || hop <= 0 || hop > len) {
    throw Error(ErrorCode::kInvalidArgument,
                "frame spec needs 0 < hop <= frame length");
  }
  const Eigen::VectorXd w = make_window(spec.window, len);
  const Eigen::Index n = buffer.size();
  const Eigen::Index count = frame_count(n, len, hop);
  FrameMatrix frames = FrameMatrix::Zero(count, len);
  for (Eigen::Index f = 0; f < count; ++f) {
    const Eigen::Index start = f * hop;
    const Eigen::Index avail = std::min<Eigen::Index>(len, n - start);
    if (avail <= 0) continue;
    frames.row(f).head(avail) =
        buffer.samples.segment(start, avail).transpose().cwiseProduct(
            w.head(avail).transpose());
  }
  return frames;
}

AudioBuffer overlap_add(const FrameMatrix& frames, const FrameSpec& spec,
                        Eigen::Index original_len, int sample_rate) {
  const int len = spec.frame_len(sample_rate);
  const int hop = spec.hop(sample_rate);
  if (frames.cols() != len || hop <= 0 || hop > len) {
    throw Error(ErrorCode::kSpecMismatch,
                "frames have " + std::to_string(frames.cols()) +
                    " columns, spec implies " + std::to_string(len));
  }
  const Eigen::VectorXd w = make_window(spec.window, len);
  const Eigen::Index span =
      std::max<Eigen::Index>(original_len, (frames.rows() - 1) * hop + len);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(span);
  Eigen::VectorXd norm = Eigen::VectorXd::Zero(span);
  for (Eigen::Index f = 0; f < frames.rows(); ++f) {
    acc.segment(f * hop, len) += frames.row(f).transpose();
    norm.segment(f * hop, len) += w;
  }
  const double floor = 1e-8 * w.maxCoeff();
  AudioBuffer out;
  out.sample_rate = sample_rate;
  out.samples.setZero(original_len);
  for (Eigen::Index i = 0; i < original_len; ++i) {
    if (norm[i] > floor) out.samples[i] = acc[i] / norm[i];
  }
  return out;
}

}  // namespace vpdiag
