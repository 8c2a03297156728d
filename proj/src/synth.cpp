#include "vpdiag/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "vpdiag/error.hpp"
#include "vpdiag/parallel.hpp"
#include "vpdiag/random.hpp"

namespace fs = std::filesystem;

namespace vpdiag {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::array<double, 4> kBaseFormants = {500.0, 1500.0, 2500.0, 3500.0};
constexpr std::array<double, 4> kFormantSpread = {0.18, 0.15, 0.13, 0.12};
constexpr std::array<std::array<double, 2>, 4> kBandwidthRange = {
    {{60.0, 120.0}, {90.0, 150.0}, {120.0, 200.0}, {150.0, 250.0}}};
constexpr int kSincHalfWidth = 16;
constexpr double kSincCutoff = 0.45;  // cycles per sample

double windowed_sinc(double x) {
  if (std::abs(x) >= kSincHalfWidth) return 0.0;
  const double w = 0.5 + 0.5 * std::cos(kPi * x / kSincHalfWidth);
  const double arg = 2.0 * kSincCutoff * x;
  const double s = std::abs(arg) < 1e-12 ? 1.0 : std::sin(kPi * arg) / (kPi * arg);
  return 2.0 * kSincCutoff * s * w;
}

void one_pole_lowpass(Eigen::VectorXd& x, double pole) {
  double y = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    y = (1.0 - pole) * x[i] + pole * y;
    x[i] = y;
  }
}

double rms(const Eigen::VectorXd& x) {
  return x.size() == 0 ? 0.0 : std::sqrt(x.squaredNorm() / static_cast<double>(x.size()));
}

struct Syllable {
  double start = 0.0;  // samples
  double length = 0.0;
  double amplitude = 1.0;
  double accent = 0.0;
  std::array<double, 4> vowel{};
};

}  // namespace

nlohmann::json SpeakerProfile::to_json() const {
  nlohmann::json formant_list = nlohmann::json::array();
  for (const auto& f : formants) {
    formant_list.push_back({{"center_hz", f.center_hz}, {"bandwidth_hz", f.bandwidth_hz}});
  }
  return {{"seed", seed}, {"formants", formant_list}, {"f0_hz", f0_hz}, {"syllable_rate", syllable_rate}};
}

void PathologySpec::validate() const {
  if (!(jitter_pct >= 0.0 && jitter_pct <= 10.0)) {
    throw Error(ErrorCode::kInvalidArgument, "jitter_pct must lie in [0, 10]");
  }
  if (!(rate_scale >= 0.5 && rate_scale <= 1.5)) {
    throw Error(ErrorCode::kInvalidArgument, "rate_scale must lie in [0.5, 1.5]");
  }
  if (!std::isfinite(breath_noise_db)) {
    throw Error(ErrorCode::kInvalidArgument, "breath_noise_db must be finite");
  }
}

nlohmann::json PathologySpec::to_json() const {
  return {{"present", present},
          {"jitter_pct", jitter_pct},
          {"breath_noise_db", breath_noise_db},
          {"rate_scale", rate_scale}};
}

const char* to_string(Dialect d) { return d == Dialect::kA ? "A" : "B"; }

Dialect parse_dialect(std::string_view name) {
  if (name == "A" || name == "a") return Dialect::kA;
  if (name == "B" || name == "b") return Dialect::kB;
  throw Error(ErrorCode::kInvalidArgument, "unknown dialect '" + std::string(name) + "'");
}

SpeakerProfile generate_speaker(std::uint64_t seed) {
  return generate_speaker(seed, Rng(mix_seed(seed, 0x5e8)).uniform() < 0.5 ? Sex::kFemale : Sex::kMale);
}

SpeakerProfile generate_speaker(std::uint64_t seed, Sex sex) {
  Rng rng(mix_seed(seed, 0x5eed));
  SpeakerProfile p;
  p.seed = seed;
  const bool female = sex == Sex::kFemale;
  p.f0_hz = female ? rng.uniform(170.0, 250.0) : rng.uniform(90.0, 150.0);
  const double tract = female ? rng.uniform(1.03, 1.14) : rng.uniform(0.88, 1.0);
  for (std::size_t i = 0; i < kBaseFormants.size(); ++i) {
    Formant f;
    f.center_hz = kBaseFormants[i] * tract * rng.uniform(1.0 - kFormantSpread[i], 1.0 + kFormantSpread[i]);
    if (i > 0) f.center_hz = std::max(f.center_hz, p.formants[i - 1].center_hz + 200.0);
    f.bandwidth_hz = rng.uniform(kBandwidthRange[i][0], kBandwidthRange[i][1]);
    p.formants.push_back(f);
  }
  p.syllable_rate = rng.uniform(3.5, 5.0);
  return p;
}

AudioBuffer synthesize_utterance(const SpeakerProfile& profile, const PathologySpec& pathology,
                                 double duration_s, std::uint64_t seed, Dialect dialect) {
  if (!(duration_s >= 2.0 && duration_s <= 15.0)) {
    throw Error(ErrorCode::kInvalidArgument, "utterance duration must lie in [2, 15] s");
  }
  pathology.validate();
  if (profile.formants.empty()) throw Error(ErrorCode::kInvalidArgument, "profile has no formants");

  const int fs_rate = kCanonicalRate;
  const auto n = static_cast<Eigen::Index>(std::llround(duration_s * fs_rate));
  Rng rng(mix_seed(seed, 0xa0d10));

  // Syllable timeline.
  const double rate = profile.syllable_rate * pathology.rate_scale;
  std::vector<Syllable> syllables;
  for (double t = 0.0; t < static_cast<double>(n);) {
    Syllable s;
    s.start = t;
    s.length = fs_rate / rate * rng.uniform(0.8, 1.2);
    s.amplitude = rng.uniform(0.6, 1.0);
    s.accent = rng.uniform(-1.0, 1.0);
    for (std::size_t k = 0; k < s.vowel.size(); ++k) {
      const double spread = k == 0 ? 0.2 : 0.12;
      s.vowel[k] = rng.uniform(1.0 - spread, 1.0 + spread);
    }
    syllables.push_back(s);
    t += s.length;
  }
  auto syllable_at = [&](double t) -> std::size_t {
    const auto it = std::upper_bound(syllables.begin(), syllables.end(), t,
                                     [](double v, const Syllable& s) { return v < s.start; });
    return it == syllables.begin() ? 0 : static_cast<std::size_t>(it - syllables.begin() - 1);
  };
  auto phase_in = [&](std::size_t i, double t) { return (t - syllables[i].start) / syllables[i].length; };

  // F0 contour: gentle declination plus a per-syllable accent.
  auto f0_at = [&](double t) {
    const std::size_t i = syllable_at(t);
    const double bump = std::sin(kPi * std::clamp(phase_in(i, t), 0.0, 1.0));
    const double decl = 1.0 + 0.06 * (0.5 - t / static_cast<double>(n));
    return profile.f0_hz * decl * (1.0 + 0.04 * syllables[i].accent * bump);
  };

  // Pulse train with Gaussian period jitter.
  const double sigma = pathology.jitter_pct / 100.0 / (2.0 / std::sqrt(kPi));
  Eigen::VectorXd source = Eigen::VectorXd::Zero(n);
  for (double t = rng.uniform(0.0, fs_rate / profile.f0_hz); t < static_cast<double>(n);) {
    const auto centre = static_cast<Eigen::Index>(std::floor(t));
    for (Eigen::Index k = centre - kSincHalfWidth + 1; k <= centre + kSincHalfWidth; ++k) {
      if (k >= 0 && k < n) source[k] += windowed_sinc(static_cast<double>(k) - t);
    }
    const double factor = std::clamp(1.0 + sigma * rng.normal(), 0.7, 1.3);
    t += fs_rate / f0_at(t) * factor;
  }
  one_pole_lowpass(source, 0.95);
  one_pole_lowpass(source, 0.95);

  // Aspiration noise relative to the filtered pulse train.
  const double noise_rms = rms(source) * std::pow(10.0, pathology.breath_noise_db / 20.0);
  for (Eigen::Index i = 0; i < n; ++i) source[i] += noise_rms * rng.normal();

  // Formant cascade with coefficients that glide between syllable vowels.
  const std::size_t n_formants = profile.formants.size();
  std::vector<std::array<double, 2>> state(n_formants, {0.0, 0.0});
  std::vector<std::array<double, 3>> coef(n_formants);
  Eigen::VectorXd voiced(n);
  constexpr int kUpdate = 16;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i % kUpdate == 0) {
      const double t = static_cast<double>(i);
      const std::size_t s = syllable_at(t);
      const std::size_t next = std::min(s + 1, syllables.size() - 1);
      const double ph = std::clamp(phase_in(s, t), 0.0, 1.0);
      const double blend = ph < 0.7 ? 0.0 : 0.5 - 0.5 * std::cos(kPi * (ph - 0.7) / 0.3);
      for (std::size_t k = 0; k < n_formants; ++k) {
        const double v = k < 4 ? (1.0 - blend) * syllables[s].vowel[k] + blend * syllables[next].vowel[k] : 1.0;
        const double f = std::clamp(profile.formants[k].center_hz * v, 150.0, 0.45 * fs_rate);
        const double r = std::exp(-kPi * profile.formants[k].bandwidth_hz / fs_rate);
        const double a1 = 2.0 * r * std::cos(2.0 * kPi * f / fs_rate);
        const double a2 = -r * r;
        coef[k] = {1.0 - a1 - a2, a1, a2};
      }
    }
    double x = source[i];
    for (std::size_t k = 0; k < n_formants; ++k) {
      const double y = coef[k][0] * x + coef[k][1] * state[k][0] + coef[k][2] * state[k][1];
      state[k][1] = state[k][0];
      state[k][0] = y;
      x = y;
    }
    voiced[i] = x;
  }

  // Lip radiation and syllabic envelope.
  Eigen::VectorXd out(n);
  double prev = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i);
    const std::size_t s = syllable_at(t);
    const double ph = std::clamp(phase_in(s, t), 0.0, 1.0);
    const double env = syllables[s].amplitude * (0.08 + 0.92 * std::pow(std::sin(kPi * ph), 2));
    out[i] = (voiced[i] - 0.95 * prev) * env;
    prev = voiced[i];
  }

  if (dialect == Dialect::kB) {
    one_pole_lowpass(out, 0.55);
    const double bg = rms(out) * std::pow(10.0, -12.0 / 20.0);
    Rng noise(mix_seed(seed, 0xb0b));
    double hum_phase = noise.uniform(0.0, 2.0 * kPi);
    for (Eigen::Index i = 0; i < n; ++i) {
      out[i] += bg * noise.normal() + 0.5 * bg * std::sin(hum_phase);
      hum_phase += 2.0 * kPi * 100.0 / fs_rate;
    }
  }

  const double peak = out.cwiseAbs().maxCoeff();
  if (peak > 0.0) out *= rng.uniform(0.3, 0.9) / peak;
  return AudioBuffer{std::move(out), fs_rate};
}

void CorpusConfig::validate() const {
  if (n_speakers < 4) throw Error(ErrorCode::kInvalidArgument, "n_speakers must be at least 4");
  if (utt_per_speaker < 1) throw Error(ErrorCode::kInvalidArgument, "utt_per_speaker must be positive");
  if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "positive_fraction must lie in [0, 1]");
  }
  if (!(duration_s >= 2.0 && duration_s <= 15.0)) {
    throw Error(ErrorCode::kInvalidArgument, "duration_s must lie in [2, 15]");
  }
  if (dataset_id.empty() || dataset_id.find_first_of(",/\\ ") != std::string::npos) {
    throw Error(ErrorCode::kInvalidArgument, "dataset_id must be non-empty without separators");
  }
}

nlohmann::json CorpusConfig::to_json() const {
  return {{"dataset_id", dataset_id},     {"n_speakers", n_speakers}, {"utt_per_speaker", utt_per_speaker},
          {"positive_fraction", positive_fraction}, {"seed", seed},   {"duration_s", duration_s},
          {"dialect", to_string(dialect)}};
}

CorpusConfig CorpusConfig::from_json(const nlohmann::json& j) {
  CorpusConfig c;
  c.dataset_id = j.value("dataset_id", c.dataset_id);
  c.n_speakers = j.value("n_speakers", c.n_speakers);
  c.utt_per_speaker = j.value("utt_per_speaker", c.utt_per_speaker);
  c.positive_fraction = j.value("positive_fraction", c.positive_fraction);
  c.seed = j.value("seed", c.seed);
  c.duration_s = j.value("duration_s", c.duration_s);
  c.dialect = parse_dialect(j.value("dialect", std::string("A")));
  return c;
}

PathologySpec draw_pathology(bool positive, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x9a7));
  PathologySpec p;
  p.present = positive;
  if (positive) {
    const double s = rng.uniform();
    p.jitter_pct = 0.8 + 3.2 * s;
    p.breath_noise_db = -32.0 + 16.0 * s;
    p.rate_scale = 0.95 - 0.2 * s;
  } else {
    p.jitter_pct = rng.uniform(0.0, 0.8);
    p.breath_noise_db = rng.uniform(-42.0, -30.0);
    p.rate_scale = rng.uniform(0.95, 1.05);
  }
  return p;
}

DatasetManifest generate_corpus(const CorpusConfig& config, const fs::path& out_dir, int jobs) {
  config.validate();
  const int n = config.n_speakers;
  const int n_valid = std::max(1, static_cast<int>(std::lround(0.2 * n)));
  const int n_test = std::max(1, static_cast<int>(std::lround(0.2 * n)));
  const int n_train = n - n_valid - n_test;
  if (n_train < 1) throw Error(ErrorCode::kInvalidArgument, "too few speakers for a 60/20/20 split");

  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng(mix_seed(config.seed, 7)).shuffle(order.begin(), order.end());

  struct SpeakerSlot {
    Partition partition = Partition::kTrain;
    bool positive = false;
    Sex sex = Sex::kMale;
  };
  std::vector<SpeakerSlot> slots(static_cast<std::size_t>(n));
  const std::array<std::pair<Partition, int>, 3> layout = {
      {{Partition::kTrain, n_train}, {Partition::kValid, n_valid}, {Partition::kTest, n_test}}};
  std::size_t cursor = 0;
  for (const auto& [part, count] : layout) {
    const int positives = static_cast<int>(std::lround(config.positive_fraction * count));
    if (positives == 0 || positives == count) {
      throw Error(ErrorCode::kSingleClass, std::string("partition '") + to_string(part) + "' would hold " +
                                               std::to_string(count) + " speaker(s) of a single class");
    }
    for (int k = 0; k < count; ++k, ++cursor) {
      auto& slot = slots[static_cast<std::size_t>(order[cursor])];
      slot.partition = part;
      slot.positive = k < positives;
      const int rank = slot.positive ? k : k - positives;
      const std::uint64_t group = 100 + 2 * static_cast<std::uint64_t>(part) + (slot.positive ? 1 : 0);
      slot.sex = (rank % 2 == 0) == (mix_seed(config.seed, group) % 2 == 0) ? Sex::kFemale : Sex::kMale;
    }
  }

  std::error_code ec;
  fs::create_directories(out_dir / "audio", ec);
  if (ec) throw Error(ErrorCode::kUnwritablePath, "cannot create corpus directory: " + out_dir.string());

  DatasetManifest manifest;
  manifest.dataset_id = config.dataset_id;
  const std::size_t total = static_cast<std::size_t>(n) * static_cast<std::size_t>(config.utt_per_speaker);
  manifest.rows.resize(total);
  char buf[64];
  for (std::size_t idx = 0; idx < total; ++idx) {
    const int spk = static_cast<int>(idx) / config.utt_per_speaker;
    const int utt = static_cast<int>(idx) % config.utt_per_speaker;
    auto& row = manifest.rows[idx];
    std::snprintf(buf, sizeof buf, "_spk%02d", spk);
    row.speaker_id = config.dataset_id + buf;
    std::snprintf(buf, sizeof buf, "_u%02d", utt);
    row.utterance_id = *row.speaker_id + buf;
    row.label = slots[static_cast<std::size_t>(spk)].positive ? Label::kPositive : Label::kNegative;
    row.partition = slots[static_cast<std::size_t>(spk)].partition;
    row.audio["clean"] = fs::absolute(out_dir / "audio" / (row.utterance_id + ".wav"));
  }

  parallel_for(total, jobs, [&](std::size_t idx) {
    const int spk = static_cast<int>(idx) / config.utt_per_speaker;
    const int utt = static_cast<int>(idx) % config.utt_per_speaker;
    auto& row = manifest.rows[idx];
    const SpeakerProfile profile = generate_speaker(mix_seed(config.seed, 1000 + static_cast<std::uint64_t>(spk)),
                                                    slots[static_cast<std::size_t>(spk)].sex);
    const std::uint64_t utt_seed = mix_seed(mix_seed(config.seed, 2000 + static_cast<std::uint64_t>(spk)),
                                            static_cast<std::uint64_t>(utt));
    const PathologySpec pathology = draw_pathology(row.label == Label::kPositive, utt_seed);
    const AudioBuffer audio = synthesize_utterance(profile, pathology, config.duration_s, utt_seed, config.dialect);
    write_wav(audio, row.audio["clean"]);
    char num[32];
    std::snprintf(num, sizeof num, "%.4f", pathology.jitter_pct);
    row.metadata["jitter_pct"] = num;
    std::snprintf(num, sizeof num, "%.4f", pathology.breath_noise_db);
    row.metadata["breath_noise_db"] = num;
    std::snprintf(num, sizeof num, "%.4f", pathology.rate_scale);
    row.metadata["rate_scale"] = num;
  });

  const fs::path manifest_path = out_dir / "manifest.csv";
  write_manifest_csv(manifest, manifest_path);
  nlohmann::json cfg = config.to_json();
  cfg["format"] = "vpdiag-corpus";
  cfg["partitions"] = {{"train", n_train}, {"valid", n_valid}, {"test", n_test}};
  std::ofstream out(out_dir / "corpus_config.json");
  out << cfg.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::kUnwritablePath, "cannot write corpus_config.json");
  out.close();
  return load_manifest(manifest_path);
}

}  // namespace vpdiag
