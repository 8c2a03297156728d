#pragma once

#include <Eigen/Dense>

#include <filesystem>

namespace vpdiag {

inline constexpr int kCanonicalRate = 16000;

/// Mono signal plus its sample rate. Samples are nominally in [-1, 1].
struct AudioBuffer {
  Eigen::VectorXd samples;
  int sample_rate = kCanonicalRate;

  Eigen::Index size() const { return samples.size(); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

enum class Window { kRectangular, kHann, kHamming };

struct FrameSpec {
  double frame_len_ms = 20.0;
  double hop_ms = 10.0;
  Window window = Window::kHann;

  int frame_len(int sample_rate) const;
  int hop(int sample_rate) const;
};

/// One frame per row, contiguous in memory.
using FrameMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

bool is_supported_rate(int sample_rate);

/// Periodic window of the given length (periodic variants are COLA at 50%).
Eigen::VectorXd make_window(Window window, int length);

/// True when shifted copies of the window sum to a constant within 1e-6.
bool is_cola(const FrameSpec& spec, int sample_rate);

Eigen::Index frame_count(Eigen::Index n_samples, int frame_len, int hop);

AudioBuffer read_wav(const std::filesystem::path& path);

/// Writes 16-bit PCM mono. Samples are clipped to [-1, 1] first.
void write_wav(const AudioBuffer& buffer, const std::filesystem::path& path);

/// Reads a WAV file and resamples it to the canonical 16 kHz rate.
AudioBuffer load_canonical(const std::filesystem::path& path);

/// Kaiser-windowed sinc polyphase resampler.
AudioBuffer resample(const AudioBuffer& buffer, int target_rate);

/// Splits the buffer into windowed frames. Inputs shorter than one frame are
/// zero-padded to exactly one frame.
FrameMatrix frame_signal(const AudioBuffer& buffer, const FrameSpec& spec);

/// Overlap-adds frames produced by frame_signal and divides by the summed
/// window, returning a buffer of original_len samples.
AudioBuffer overlap_add(const FrameMatrix& frames, const FrameSpec& spec,
                        Eigen::Index original_len, int sample_rate);

}  // namespace vpdiag
