#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "vpdiag/audio.hpp"

namespace vpdiag {

enum class FeatureKind { kMsr, kLldCompact, kProsodic, kProxyEmbedding, kPhoneme, kLogmelspecStats };
enum class Label { kNegative, kPositive };
enum class BinAxis { kMel, kLinear, kBark };

const char* to_string(FeatureKind kind);
FeatureKind parse_feature_kind(std::string_view name);
const char* to_string(Label label);
Label parse_label(std::string_view name);

/// Fixed vector length for each kind.
Eigen::Index feature_length(FeatureKind kind);

inline constexpr double kLogFloor = 1e-10;

struct Spectrogram {
  Eigen::MatrixXd values;  ///< time x bin
  BinAxis bin_axis = BinAxis::kMel;
  FrameSpec frame;
  int delta_order = 0;
};

struct FeatureVector {
  Eigen::VectorXd values;
  FeatureKind kind = FeatureKind::kMsr;
  std::string utterance_id;
  std::optional<Label> label;
  std::string dataset_id;
  std::string anonymization_tag;  ///< clean, mcadams or external:<name>

  /// Throws kSchema on a length/kind mismatch, non-finite values or a
  /// malformed tag.
  void validate() const;
};

bool is_valid_anonymization_tag(std::string_view tag);

struct LogMelParams {
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  int nfft = 512;
  int n_mels = 64;
  double fmin = 0.0;
  double fmax = 8000.0;
  /// Zero-pad (or truncate) the waveform to fixed_seconds first.
  bool fixed_shape = false;
  double fixed_seconds = 10.0;

  nlohmann::json to_json() const;
};

Spectrogram log_mel_spectrogram(const AudioBuffer& audio, const LogMelParams& params = {});

/// Appends first and second order regression deltas (+-2 frames, edge frames
/// replicated). With fewer than 5 frames the window shrinks to what fits.
Spectrogram add_deltas(const Spectrogram& spec);

struct MsrParams {
  int frame_len = 256;  ///< 16 ms at 16 kHz
  int hop = 32;         ///< 2 ms: 500 Hz envelope rate
  int nfft = 256;
  int acoustic_bands = 23;
  double fmax = 8000.0;
  int modulation_bands = 8;
  double modulation_lo_hz = 4.0;   ///< first band centre
  double modulation_hi_hz = 128.0; ///< last band centre
  int modulation_window = 256;     ///< envelope frames
  int modulation_hop = 128;

  nlohmann::json to_json() const;
  /// Modulation band edges in Hz: geometric midpoints between log-spaced
  /// centres, extended by half a step at both ends.
  std::vector<double> modulation_edges() const;
};

/// Modulation spectral representation, band-major (acoustic band b,
/// modulation band m) at index b * modulation_bands + m. Cells are
/// log(energy / total_envelope_mean^2), floored at kLogFloor.
FeatureVector msr_features(const AudioBuffer& audio, const MsrParams& params = {});

/// Layout of the 130-entry compact LLD vector. MFCCs are c1..c13 from 40 mel
/// bands; functionals are mean, std, p10, p90, slope (per second).
namespace lld {
inline constexpr int kMfcc = 13;
inline constexpr int kMfccBegin = 0;          // 13 x 5
inline constexpr int kDeltaBegin = 65;        // 13 x (std, p10, p90)
inline constexpr int kLogEnergyBegin = 104;   // 5
inline constexpr int kZcrBegin = 109;         // 5
inline constexpr int kF0Begin = 114;          // 5, semitones re 100 Hz, voiced frames
inline constexpr int kVoicingBegin = 119;     // 5
inline constexpr int kJitterLocal = 124;
inline constexpr int kJitterRap = 125;
inline constexpr int kShimmerLocal = 126;
inline constexpr int kShimmerDb = 127;
inline constexpr int kVoicedFraction = 128;
inline constexpr int kDeltaLogEnergyStd = 129;
inline constexpr int kLength = 130;
}  // namespace lld

FeatureVector compact_llds(const AudioBuffer& audio);

/// F0 mean, std, range (Hz), slope (Hz/s), voiced fraction, voiced
/// log-energy mean and std, mean |dF0| between adjacent voiced frames.
inline constexpr int kProsodicLength = 8;
FeatureVector prosodic_f0_features(const AudioBuffer& audio);

/// MFCC mean (13), MFCC std (13), 23-band long-term log spectrum with its
/// mean removed, log2 F0 mean re 100 Hz and its std; unit norm.
inline constexpr int kEmbeddingLength = 51;
FeatureVector proxy_speaker_embedding(const AudioBuffer& audio);

/// Per-bin mean and std over time of the log-mel spectrogram with deltas.
FeatureVector logmelspec_stats(const AudioBuffer& audio, const LogMelParams& params = {});

/// Dispatch for the audio-derived kinds. kPhoneme throws kInvalidArgument.
FeatureVector extract_features(FeatureKind kind, const AudioBuffer& audio);

/// Frame-level MFCCs c1..c13, time x 13.
Eigen::MatrixXd mfcc(const AudioBuffer& audio);

struct PhonemeIngest {
  std::vector<FeatureVector> vectors;
  std::vector<std::string> unknown_ids;
  std::vector<std::string> warnings;
};

/// Reads utterance_id, n_mispronunciations, n_pauses, phonemes_per_second.
/// Ids outside `known` (when given) are kept and listed in unknown_ids.
PhonemeIngest ingest_phoneme_features(const std::filesystem::path& path,
                                      const std::set<std::string>* known = nullptr);

/// Columnar feature file: utterance_id, kind, anonymization_tag, label,
/// dataset_id, f000.. with values printed round-trip exact.
void write_feature_file(const std::filesystem::path& path,
                        const std::vector<FeatureVector>& rows);
std::vector<FeatureVector> read_feature_file(const std::filesystem::path& path);

/// Stacks values row-wise; all rows must share one length.
Eigen::MatrixXd stack_features(const std::vector<FeatureVector>& rows);

/// Splits a CSV line on commas, trimming surrounding whitespace and quotes.
std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace vpdiag
