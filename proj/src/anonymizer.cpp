#include "vpdiag/anonymizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

#include "vpdiag/error.hpp"
#include "vpdiag/lpc.hpp"
#include "vpdiag/random.hpp"

namespace vpdiag {

namespace {

const char* window_name(Window w) {
  switch (w) {
    case Window::kRectangular:
      return "rectangular";
    case Window::kHann:
      return "hann";
    case Window::kHamming:
      return "hamming";
  }
  return "hann";
}

Window window_from_name(const std::string& name) {
  if (name == "rectangular") return Window::kRectangular;
  if (name == "hamming") return Window::kHamming;
  if (name == "hann") return Window::kHann;
  throw Error(ErrorCode::kInvalidArgument, "unknown window: " + name);
}

struct FrameFilter {
  Eigen::VectorXd analysis;   // a_k of the original frame
  Eigen::VectorXd synthesis;  // a_k after the pole transform
  Eigen::VectorXd residual;
  bool passthrough = false;
  bool root_failure = false;
};

FrameFilter design_frame(const Eigen::VectorXd& windowed, int order,
                         double alpha) {
  FrameFilter out;
  const LpcModel<double> model = lpc_analyze<double>(windowed, order);
  out.analysis = model.coeffs;
  out.residual = model.residual;
  if (model.passthrough) {
    out.passthrough = true;
    out.synthesis = model.coeffs;
    return out;
  }
  try {
    PoleSet<double> poles = poles_from_coeffs<double>(model.coeffs);
    poles = limit_pole_radius(mcadams_shift(poles, alpha));
    out.synthesis = coeffs_from_poles(poles);
  } catch (const Error&) {
    out.root_failure = true;
    out.synthesis = model.coeffs;
  }
  return out;
}

double effective_alpha(const AudioBuffer& buffer, const McAdamsConfig& cfg) {
  if (!cfg.random_alpha_range) return cfg.alpha;
  const std::uint64_t content = fnv1a(
      buffer.samples.data(),
      static_cast<std::size_t>(buffer.size()) * sizeof(double));
  Rng rng(mix_seed(cfg.seed, content));
  return rng.uniform(cfg.random_alpha_range->first,
                     cfg.random_alpha_range->second);
}

AnonymizationResult run_stateful(const AudioBuffer& buffer,
                                 const McAdamsConfig& cfg, double alpha) {
  const int len = cfg.frame.frame_len(buffer.sample_rate);
  const int hop = cfg.frame.hop(buffer.sample_rate);
  const Eigen::Index n = buffer.size();
  const Eigen::VectorXd window = make_window(cfg.frame.window, len);
  const int p = cfg.lpc_order;
  const Eigen::VectorXd& x = buffer.samples;

  AnonymizationResult result;
  result.alpha_used = alpha;
  result.audio.sample_rate = buffer.sample_rate;
  result.audio.samples.setZero(n);
  Eigen::VectorXd& y = result.audio.samples;

  // Segment f = [f*hop, (f+1)*hop) is filtered with coefficients estimated
  // on the analysis frame centred on it.
  const Eigen::Index segments = (n + hop - 1) / hop;
  const Eigen::Index lead = (len - hop) / 2;
  Eigen::VectorXd frame(len);
  for (Eigen::Index f = 0; f < segments; ++f) {
    const Eigen::Index start = f * hop - lead;
    for (int i = 0; i < len; ++i) {
      const Eigen::Index idx = start + i;
      frame[i] = (idx >= 0 && idx < n) ? x[idx] * window[i] : 0.0;
    }
    const FrameFilter filt = design_frame(frame, p, alpha);
    ++result.frames;
    result.passthrough_frames += filt.passthrough ? 1 : 0;
    result.root_failures += filt.root_failure ? 1 : 0;

    const Eigen::Index seg_end = std::min<Eigen::Index>(n, (f + 1) * hop);
    for (Eigen::Index t = f * hop; t < seg_end; ++t) {
      const Eigen::Index kmax = std::min<Eigen::Index>(p, t);
      double e = x[t];
      for (Eigen::Index k = 1; k <= kmax; ++k) e -= filt.analysis[k - 1] * x[t - k];
      double acc = e;
      for (Eigen::Index k = 1; k <= kmax; ++k) acc += filt.synthesis[k - 1] * y[t - k];
      y[t] = acc;
    }
  }
  return result;
}

AnonymizationResult run_overlap_add(const AudioBuffer& buffer,
                                    const McAdamsConfig& cfg, double alpha) {
  const int len = cfg.frame.frame_len(buffer.sample_rate);
  const Eigen::Index n = buffer.size();

  // Pad so every original sample is covered by a full set of overlapping
  // frames.
  AudioBuffer padded;
  padded.sample_rate = buffer.sample_rate;
  padded.samples.setZero(n + len + len);
  padded.samples.segment(len, n) = buffer.samples;

  FrameMatrix frames = frame_signal(padded, cfg.frame);
  AnonymizationResult result;
  result.alpha_used = alpha;
  for (Eigen::Index f = 0; f < frames.rows(); ++f) {
    const Eigen::VectorXd windowed = frames.row(f).transpose();
    const FrameFilter filt = design_frame(windowed, cfg.lpc_order, alpha);
    ++result.frames;
    result.passthrough_frames += filt.passthrough ? 1 : 0;
    result.root_failures += filt.root_failure ? 1 : 0;
    frames.row(f) =
        synthesis_filter<double>(filt.synthesis, filt.residual).transpose();
  }
  AudioBuffer joined =
      overlap_add(frames, cfg.frame, padded.size(), buffer.sample_rate);
  result.audio.sample_rate = buffer.sample_rate;
  result.audio.samples = joined.samples.segment(len, n);
  return result;
}

}  // namespace

void McAdamsConfig::validate() const {
  if (!(alpha >= 0.5 && alpha <= 1.5)) {
    throw Error(ErrorCode::kInvalidArgument,
                "McAdams alpha must lie in [0.5, 1.5], got " +
                    std::to_string(alpha));
  }
  if (random_alpha_range) {
    const auto [lo, hi] = *random_alpha_range;
    if (!(lo >= 0.5 && hi <= 1.5 && lo <= hi)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "random alpha range must be an ordered sub-range of "
                  "[0.5, 1.5]");
    }
  }
  if (lpc_order < 8 || lpc_order > 32) {
    throw Error(ErrorCode::kInvalidArgument,
                "LPC order must lie in [8, 32], got " +
                    std::to_string(lpc_order));
  }
  if (!(frame.hop_ms > 0.0 && frame.hop_ms <= frame.frame_len_ms)) {
    throw Error(ErrorCode::kInvalidArgument,
                "frame spec needs 0 < hop <= frame length");
  }
}

nlohmann::json McAdamsConfig::to_json() const {
  nlohmann::json j;
  j["alpha"] = alpha;
  j["lpc_order"] = lpc_order;
  j["frame_ms"] = frame.frame_len_ms;
  j["hop_ms"] = frame.hop_ms;
  j["window"] = window_name(frame.window);
  j["seed"] = seed;
  j["synthesis"] = mode == SynthesisMode::kStateful ? "stateful" : "overlap_add";
  if (random_alpha_range) {
    j["random_alpha_range"] = {random_alpha_range->first,
                               random_alpha_range->second};
  } else {
    j["random_alpha_range"] = nullptr;
  }
  return j;
}

McAdamsConfig McAdamsConfig::from_json(const nlohmann::json& j) {
  McAdamsConfig cfg;
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.lpc_order = j.value("lpc_order", cfg.lpc_order);
  cfg.frame.frame_len_ms = j.value("frame_ms", cfg.frame.frame_len_ms);
  cfg.frame.hop_ms = j.value("hop_ms", cfg.frame.hop_ms);
  cfg.frame.window = window_from_name(j.value("window", std::string("hann")));
  cfg.seed = j.value("seed", cfg.seed);
  const std::string mode = j.value("synthesis", std::string("stateful"));
  if (mode == "overlap_add") {
    cfg.mode = SynthesisMode::kOverlapAdd;
  } else if (mode != "stateful") {
    throw Error(ErrorCode::kInvalidArgument, "unknown synthesis mode: " + mode);
  }
  if (j.contains("random_alpha_range") && !j["random_alpha_range"].is_null()) {
    const auto& r = j["random_alpha_range"];
    cfg.random_alpha_range = std::make_pair(r.at(0).get<double>(),
                                            r.at(1).get<double>());
  }
  cfg.validate();
  return cfg;
}

std::string McAdamsConfig::fingerprint() const {
  return hex64(fnv1a(to_json().dump()));
}

AnonymizationResult anonymize_detailed(const AudioBuffer& buffer,
                                       const McAdamsConfig& config) {
  config.validate();
  if (buffer.size() == 0) {
    throw Error(ErrorCode::kEmptyInput, "cannot anonymize an empty buffer");
  }
  const double alpha = effective_alpha(buffer, config);
  AnonymizationResult result = config.mode == SynthesisMode::kStateful
                                   ? run_stateful(buffer, config, alpha)
                                   : run_overlap_add(buffer, config, alpha);

  const double peak_in = buffer.samples.cwiseAbs().maxCoeff();
  const double peak_out = result.audio.samples.cwiseAbs().maxCoeff();
  if (peak_out > 0.0 && std::isfinite(peak_out)) {
    result.audio.samples *= peak_in / peak_out;
  } else if (!std::isfinite(peak_out)) {
    // A diverged synthesis filter would be a bug; fall back to the input.
    result.audio.samples = buffer.samples;
  }
  return result;
}

std::filesystem::path sidecar_path(const std::filesystem::path& wav_path) {
  return std::filesystem::path(wav_path.string() + ".json");
}

void write_sidecar(const std::filesystem::path& wav_path,
                   const McAdamsConfig& config,
                   const AnonymizationResult& result,
                   const std::filesystem::path& source) {
  nlohmann::json j;
  j["method"] = "mcadams";
  j["config"] = config.to_json();
  j["alpha_used"] = result.alpha_used;
  j["frames"] = result.frames;
  j["passthrough_frames"] = result.passthrough_frames;
  j["root_failures"] = result.root_failures;
  j["sample_rate"] = result.audio.sample_rate;
  j["samples"] = result.audio.size();
  j["source"] = source.string();
  std::ofstream out(sidecar_path(wav_path));
  if (!out) {
    throw Error(ErrorCode::kUnwritablePath,
                "cannot write sidecar for " + wav_path.string());
  }
  out << j.dump(2) << '\n';
}

}  // namespace vpdiag
