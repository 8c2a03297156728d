#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>

#include "vpdiag/audio.hpp"

namespace vpdiag {

enum class SynthesisMode {
  // Residual and synthesis filters run continuously over hop-sized segments,
  // switching coefficients per analysis frame and keeping filter state.
  kStateful,
  // Frame-local residual/synthesis followed by windowed overlap-add.
  kOverlapAdd,
};

struct McAdamsConfig {
  double alpha = 0.8;
  int lpc_order = 20;
  FrameSpec frame{20.0, 10.0, Window::kHann};
  std::optional<std::pair<double, double>> random_alpha_range;
  std::uint64_t seed = 0;
  SynthesisMode mode = SynthesisMode::kStateful;

  /// Throws kInvalidArgument when a field is outside its sanity bounds.
  void validate() const;
  nlohmann::json to_json() const;
  static McAdamsConfig from_json(const nlohmann::json& j);
  /// Stable textual identity used for cache keys and fingerprints.
  std::string fingerprint() const;
};

struct AnonymizationResult {
  AudioBuffer audio;
  double alpha_used = 0.0;
  int frames = 0;
  int passthrough_frames = 0;
  int root_failures = 0;
};

AnonymizationResult anonymize_detailed(const AudioBuffer& buffer,
                                       const McAdamsConfig& config);

inline AudioBuffer anonymize(const AudioBuffer& buffer,
                             const McAdamsConfig& config) {
  return anonymize_detailed(buffer, config).audio;
}

/// Path of the metadata file written next to an anonymized WAV.
std::filesystem::path sidecar_path(const std::filesystem::path& wav_path);

void write_sidecar(const std::filesystem::path& wav_path,
                   const McAdamsConfig& config,
                   const AnonymizationResult& result,
                   const std::filesystem::path& source);

}  // namespace vpdiag
