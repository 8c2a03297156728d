#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vpdiag/audio.hpp"
#include "vpdiag/manifest.hpp"

namespace vpdiag {

struct Formant {
  double center_hz = 0.0;
  double bandwidth_hz = 0.0;
};

struct SpeakerProfile {
  std::uint64_t seed = 0;
  std::vector<Formant> formants;  ///< ascending, 200-4500 Hz
  double f0_hz = 120.0;           ///< 80-300 Hz
  double syllable_rate = 4.0;     ///< syllables per second

  nlohmann::json to_json() const;
};

/// Planted marker. The jitter, breath and rate fields are applied whether or
/// not `present` is set; `present` is the label. Defaults are a clean voice.
struct PathologySpec {
  bool present = false;
  double jitter_pct = 0.0;         ///< expected local jitter, 0-10
  double breath_noise_db = -40.0;  ///< source noise re pulse-train RMS
  double rate_scale = 1.0;         ///< syllabic-rate multiplier, 0.5-1.5

  void validate() const;
  nlohmann::json to_json() const;
};

/// Recording-chain profile. Dialect B adds a spectral tilt and steady
/// background noise so two corpora differ in distribution.
enum class Dialect { kA, kB };

const char* to_string(Dialect d);
Dialect parse_dialect(std::string_view name);

enum class Sex { kMale, kFemale };

/// The one-argument form draws the sex from the seed as well.
SpeakerProfile generate_speaker(std::uint64_t seed);
SpeakerProfile generate_speaker(std::uint64_t seed, Sex sex);

/// Source-filter synthesis at 16 kHz: band-limited pulse train with per-period
/// jitter plus breath noise, a 4-formant resonator cascade with per-syllable
/// vowel movement, lip radiation and syllabic amplitude modulation.
/// Throws kInvalidArgument for a duration outside 2-15 s.
AudioBuffer synthesize_utterance(const SpeakerProfile& profile, const PathologySpec& pathology,
                                 double duration_s, std::uint64_t seed,
                                 Dialect dialect = Dialect::kA);

struct CorpusConfig {
  std::string dataset_id = "synth";
  int n_speakers = 20;
  int utt_per_speaker = 10;
  double positive_fraction = 0.5;
  std::uint64_t seed = 0;
  double duration_s = 3.0;
  Dialect dialect = Dialect::kA;

  void validate() const;
  nlohmann::json to_json() const;
  static CorpusConfig from_json(const nlohmann::json& j);
};

/// Per-utterance marker draw used by generate_corpus. Positives get a
/// severity s ~ U(0, 1) mapped to jitter, breath noise and slower rate;
/// negatives get small natural variation.
PathologySpec draw_pathology(bool positive, std::uint64_t seed);

/// Writes <out_dir>/audio/*.wav, manifest.csv and corpus_config.json and
/// returns the manifest as re-read by load_manifest. Speakers are split
/// 60/20/20 into train/valid/test; labels are assigned per speaker so each
/// partition carries round(positive_fraction * speakers) positive speakers,
/// and sexes alternate within each (partition, label) group so sex does not
/// track the label.
/// Throws kSingleClass when any partition would hold one class only.
DatasetManifest generate_corpus(const CorpusConfig& config, const std::filesystem::path& out_dir,
                                int jobs = 1);

}  // namespace vpdiag
