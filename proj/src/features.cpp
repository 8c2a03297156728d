#include "vpdiag/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vpdiag/error.hpp"
#include "vpdiag/pitch.hpp"
#include "vpdiag/spectral.hpp"

namespace vpdiag {

namespace {

constexpr const char* kKindNames[] = {"msr",      "lld_compact", "prosodic",
                                      "proxy_embedding", "phoneme",
                                      "logmelspec_stats"};

constexpr int kMfccMels = 40;

double safe_log(double x) { return std::log(std::max(x, kLogFloor)); }

// mean, std, p10, p90, slope against t_i = i * dt.
Eigen::Matrix<double, 5, 1> functionals(const Eigen::VectorXd& v, double dt) {
  Eigen::Matrix<double, 5, 1> out = Eigen::Matrix<double, 5, 1>::Zero();
  if (v.size() == 0) return out;
  const double mean = v.mean();
  out[0] = mean;
  out[1] = std::sqrt((v.array() - mean).square().mean());
  out[2] = spectral::percentile(v, 0.10);
  out[3] = spectral::percentile(v, 0.90);
  const Eigen::VectorXd t =
      Eigen::VectorXd::LinSpaced(v.size(), 0.0, dt * static_cast<double>(v.size() - 1));
  out[4] = spectral::linear_slope(t, v);
  return out;
}

Eigen::VectorXd select(const Eigen::VectorXd& v, const Eigen::Array<bool, Eigen::Dynamic, 1>& mask) {
  Eigen::VectorXd out(mask.count());
  Eigen::Index j = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (mask[i]) out[j++] = v[i];
  }
  return out;
}

// Log mel energies for MFCCs and the frame power spectra they came from.
struct ShortTimeAnalysis {
  Eigen::MatrixXd power;    // frames x bins
  Eigen::MatrixXd log_mel;  // frames x kMfccMels
};

ShortTimeAnalysis short_time(const AudioBuffer& audio) {
  const int len = static_cast<int>(std::lround(0.025 * audio.sample_rate));
  const int hop = static_cast<int>(std::lround(0.010 * audio.sample_rate));
  ShortTimeAnalysis st;
  st.power = spectral::power_spectrogram(audio.samples, len, hop, 512, Window::kHann);
  const Eigen::MatrixXd fb =
      spectral::mel_filterbank(kMfccMels, 512, audio.sample_rate, 0.0, audio.sample_rate / 2.0);
  st.log_mel = (st.power * fb.transpose()).unaryExpr(&safe_log);
  return st;
}

Eigen::MatrixXd cepstra(const Eigen::MatrixXd& log_mel) {
  const Eigen::MatrixXd dct = spectral::dct_matrix(lld::kMfcc + 1, kMfccMels);
  return (log_mel * dct.bottomRows(lld::kMfcc).transpose());
}

Eigen::MatrixXd regression_delta(const Eigen::MatrixXd& x) {
  const Eigen::Index t_count = x.rows();
  const int reach = static_cast<int>(std::min<Eigen::Index>(2, (t_count - 1) / 2));
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(t_count, x.cols());
  if (reach == 0) return d;
  double denom = 0.0;
  for (int k = 1; k <= reach; ++k) denom += 2.0 * k * k;
  for (Eigen::Index t = 0; t < t_count; ++t) {
    for (int k = 1; k <= reach; ++k) {
      const Eigen::Index ahead = std::min<Eigen::Index>(t + k, t_count - 1);
      const Eigen::Index behind = std::max<Eigen::Index>(t - k, 0);
      d.row(t) += k * (x.row(ahead) - x.row(behind));
    }
  }
  return d / denom;
}

FeatureVector make_vector(FeatureKind kind, Eigen::VectorXd values) {
  FeatureVector v;
  v.kind = kind;
  v.values = std::move(values);
  v.anonymization_tag = "clean";
  return v;
}

}  // namespace

const char* to_string(FeatureKind kind) {
  return kKindNames[static_cast<int>(kind)];
}

FeatureKind parse_feature_kind(std::string_view name) {
  for (int i = 0; i < 6; ++i) {
    if (name == kKindNames[i]) return static_cast<FeatureKind>(i);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown feature kind: " + std::string(name));
}

const char* to_string(Label label) {
  return label == Label::kPositive ? "positive" : "negative";
}

Label parse_label(std::string_view name) {
  if (name == "positive" || name == "1") return Label::kPositive;
  if (name == "negative" || name == "0") return Label::kNegative;
  throw Error(ErrorCode::kSchema, "unknown label: " + std::string(name));
}

Eigen::Index feature_length(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kMsr: return 23 * 8;
    case FeatureKind::kLldCompact: return lld::kLength;
    case FeatureKind::kProsodic: return kProsodicLength;
    case FeatureKind::kProxyEmbedding: return kEmbeddingLength;
    case FeatureKind::kPhoneme: return 3;
    case FeatureKind::kLogmelspecStats: return 64 * 3 * 2;
  }
  return 0;
}

bool is_valid_anonymization_tag(std::string_view tag) {
  if (tag == "clean" || tag == "mcadams") return true;
  constexpr std::string_view prefix = "external:";
  return tag.size() > prefix.size() && tag.substr(0, prefix.size()) == prefix;
}

void FeatureVector::validate() const {
  if (values.size() != feature_length(kind)) {
    throw Error(ErrorCode::kSchema, "feature vector for '" + utterance_id + "' has length " +
                                        std::to_string(values.size()) + ", kind " +
                                        to_string(kind) + " needs " +
                                        std::to_string(feature_length(kind)));
  }
  if (!values.allFinite()) {
    throw Error(ErrorCode::kSchema, "non-finite feature values for '" + utterance_id + "'");
  }
  if (!is_valid_anonymization_tag(anonymization_tag)) {
    throw Error(ErrorCode::kSchema, "bad anonymization tag '" + anonymization_tag +
                                        "' for '" + utterance_id + "'");
  }
}

nlohmann::json LogMelParams::to_json() const {
  return {{"frame_ms", frame_ms}, {"hop_ms", hop_ms},   {"nfft", nfft},
          {"n_mels", n_mels},     {"fmin", fmin},       {"fmax", fmax},
          {"fixed_shape", fixed_shape}, {"fixed_seconds", fixed_seconds},
          {"log_floor", kLogFloor}};
}

Spectrogram log_mel_spectrogram(const AudioBuffer& audio, const LogMelParams& params) {
  const int rate = audio.sample_rate;
  Eigen::VectorXd x = audio.samples;
  if (params.fixed_shape) {
    const auto target = static_cast<Eigen::Index>(std::lround(params.fixed_seconds * rate));
    Eigen::VectorXd padded = Eigen::VectorXd::Zero(target);
    const Eigen::Index keep = std::min(target, x.size());
    padded.head(keep) = x.head(keep);
    x = std::move(padded);
  }
  Spectrogram spec;
  spec.frame = FrameSpec{params.frame_ms, params.hop_ms, Window::kHann};
  spec.bin_axis = BinAxis::kMel;
  const Eigen::MatrixXd power = spectral::power_spectrogram(
      x, spec.frame.frame_len(rate), spec.frame.hop(rate), params.nfft, Window::kHann);
  const Eigen::MatrixXd fb =
      spectral::mel_filterbank(params.n_mels, params.nfft, rate, params.fmin, params.fmax);
  spec.values = (power * fb.transpose()).unaryExpr(&safe_log);
  return spec;
}

Spectrogram add_deltas(const Spectrogram& spec) {
  if (spec.delta_order != 0) {
    throw Error(ErrorCode::kInvalidArgument, "add_deltas expects a static spectrogram");
  }
  const Eigen::MatrixXd d1 = regression_delta(spec.values);
  const Eigen::MatrixXd d2 = regression_delta(d1);
  Spectrogram out = spec;
  out.values.resize(spec.values.rows(), 3 * spec.values.cols());
  out.values << spec.values, d1, d2;
  out.delta_order = 2;
  return out;
}

nlohmann::json MsrParams::to_json() const {
  return {{"frame_len", frame_len},
          {"hop", hop},
          {"nfft", nfft},
          {"acoustic_bands", acoustic_bands},
          {"fmax", fmax},
          {"modulation_bands", modulation_bands},
          {"modulation_lo_hz", modulation_lo_hz},
          {"modulation_hi_hz", modulation_hi_hz},
          {"modulation_window", modulation_window},
          {"modulation_hop", modulation_hop},
          {"log_floor", kLogFloor}};
}

std::vector<double> MsrParams::modulation_edges() const {
  const double step =
      std::pow(modulation_hi_hz / modulation_lo_hz, 1.0 / (modulation_bands - 1));
  std::vector<double> edges(static_cast<std::size_t>(modulation_bands + 1));
  for (int i = 0; i <= modulation_bands; ++i) {
    edges[static_cast<std::size_t>(i)] = modulation_lo_hz * std::pow(step, i - 0.5);
  }
  return edges;
}

FeatureVector msr_features(const AudioBuffer& audio, const MsrParams& p) {
  const int n_cells = p.acoustic_bands * p.modulation_bands;
  const Eigen::MatrixXd power =
      spectral::power_spectrogram(audio.samples, p.frame_len, p.hop, p.nfft, Window::kHann);
  const Eigen::MatrixXd bands =
      spectral::bark_band_matrix(p.acoustic_bands, p.nfft, audio.sample_rate, p.fmax);
  Eigen::MatrixXd env = power * bands.transpose();  // frames x bands
  if (env.rows() < p.modulation_window) {
    Eigen::MatrixXd padded = Eigen::MatrixXd::Zero(p.modulation_window, env.cols());
    padded.topRows(env.rows()) = env;
    env = std::move(padded);
  }

  const double env_rate = static_cast<double>(audio.sample_rate) / p.hop;
  const std::vector<double> edges = p.modulation_edges();
  std::vector<int> bin_band(static_cast<std::size_t>(p.modulation_window / 2 + 1), -1);
  for (int k = 0; k <= p.modulation_window / 2; ++k) {
    const double f = k * env_rate / p.modulation_window;
    for (int m = 0; m < p.modulation_bands; ++m) {
      if (f >= edges[static_cast<std::size_t>(m)] && f < edges[static_cast<std::size_t>(m + 1)]) {
        bin_band[static_cast<std::size_t>(k)] = m;
      }
    }
  }

  const Eigen::VectorXd window = make_window(Window::kHann, p.modulation_window);
  const Eigen::Index windows = frame_count(env.rows(), p.modulation_window, p.modulation_hop);
  Eigen::MatrixXd energy = Eigen::MatrixXd::Zero(p.acoustic_bands, p.modulation_bands);
  for (Eigen::Index w = 0; w < windows; ++w) {
    const Eigen::Index start = w * p.modulation_hop;
    for (int b = 0; b < p.acoustic_bands; ++b) {
      Eigen::VectorXd seg = env.col(b).segment(start, p.modulation_window);
      seg.array() -= seg.mean();
      const Eigen::VectorXd spec = spectral::power_spectrum(seg.cwiseProduct(window), p.modulation_window);
      for (int k = 0; k < spec.size(); ++k) {
        const int m = bin_band[static_cast<std::size_t>(k)];
        if (m >= 0) energy(b, m) += spec[k];
      }
    }
  }
  energy /= static_cast<double>(windows);

  const double total = env.colwise().mean().sum();
  Eigen::VectorXd values(n_cells);
  for (int b = 0; b < p.acoustic_bands; ++b) {
    for (int m = 0; m < p.modulation_bands; ++m) {
      const double cell = total > 0.0 ? energy(b, m) / (total * total) : 0.0;
      values[b * p.modulation_bands + m] = safe_log(cell);
    }
  }
  return make_vector(FeatureKind::kMsr, std::move(values));
}

Eigen::MatrixXd mfcc(const AudioBuffer& audio) {
  return cepstra(short_time(audio).log_mel);
}

FeatureVector compact_llds(const AudioBuffer& audio) {
  const double dt = 0.010;
  const ShortTimeAnalysis st = short_time(audio);
  const Eigen::MatrixXd c = cepstra(st.log_mel);
  const Eigen::MatrixXd dc = regression_delta(c);

  Eigen::VectorXd v = Eigen::VectorXd::Zero(lld::kLength);
  for (int k = 0; k < lld::kMfcc; ++k) {
    v.segment<5>(lld::kMfccBegin + 5 * k) = functionals(c.col(k), dt);
    const auto f = functionals(dc.col(k), dt);
    v.segment<3>(lld::kDeltaBegin + 3 * k) = f.segment<3>(1);
  }

  const int len = static_cast<int>(std::lround(0.025 * audio.sample_rate));
  const int hop = static_cast<int>(std::lround(0.010 * audio.sample_rate));
  const Eigen::Index frames = frame_count(audio.size(), len, hop);
  Eigen::VectorXd log_energy(frames), zcr(frames);
  for (Eigen::Index f = 0; f < frames; ++f) {
    const Eigen::Index start = f * hop;
    const Eigen::Index avail = std::max<Eigen::Index>(0, std::min<Eigen::Index>(len, audio.size() - start));
    const auto seg = audio.samples.segment(start, avail);
    log_energy[f] = safe_log(seg.squaredNorm());
    int crossings = 0;
    for (Eigen::Index i = 1; i < avail; ++i) {
      if ((seg[i] >= 0.0) != (seg[i - 1] >= 0.0)) ++crossings;
    }
    zcr[f] = static_cast<double>(crossings) / len;
  }
  v.segment<5>(lld::kLogEnergyBegin) = functionals(log_energy, dt);
  v.segment<5>(lld::kZcrBegin) = functionals(zcr, dt);

  const PitchTrack track = track_pitch(audio);
  const Eigen::Array<bool, Eigen::Dynamic, 1> voiced = track.f0.array() > 0.0;
  const Eigen::VectorXd f0 = select(track.f0, voiced);
  const Eigen::VectorXd semitones =
      (12.0 * (f0.array() / 100.0).log() / std::log(2.0)).matrix();
  v.segment<5>(lld::kF0Begin) = functionals(semitones, track.hop_s);
  v.segment<5>(lld::kVoicingBegin) = functionals(track.voicing, track.hop_s);

  const CycleMeasures cycles = measure_cycles(audio, track);
  v[lld::kJitterLocal] = cycles.jitter_local;
  v[lld::kJitterRap] = cycles.jitter_rap;
  v[lld::kShimmerLocal] = cycles.shimmer_local;
  v[lld::kShimmerDb] = cycles.shimmer_db;
  v[lld::kVoicedFraction] =
      track.frames() > 0 ? static_cast<double>(voiced.count()) / track.frames() : 0.0;
  v[lld::kDeltaLogEnergyStd] =
      functionals(regression_delta(log_energy), dt)[1];
  return make_vector(FeatureKind::kLldCompact, std::move(v));
}

FeatureVector prosodic_f0_features(const AudioBuffer& audio) {
  const PitchTrack track = track_pitch(audio);
  const Eigen::Array<bool, Eigen::Dynamic, 1> voiced = track.f0.array() > 0.0;
  const Eigen::VectorXd f0 = select(track.f0, voiced);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(kProsodicLength);
  if (f0.size() > 0) {
    Eigen::VectorXd times(f0.size());
    Eigen::Index j = 0;
    for (Eigen::Index i = 0; i < track.frames(); ++i) {
      if (voiced[i]) times[j++] = i * track.hop_s;
    }
    const double mean = f0.mean();
    v[0] = mean;
    v[1] = std::sqrt((f0.array() - mean).square().mean());
    v[2] = f0.maxCoeff() - f0.minCoeff();
    v[3] = spectral::linear_slope(times, f0);
    const Eigen::VectorXd energy =
        select(track.rms, voiced).unaryExpr([](double r) { return safe_log(r * r); });
    v[5] = energy.mean();
    v[6] = std::sqrt((energy.array() - v[5]).square().mean());
    double jumps = 0.0;
    int adjacent = 0;
    for (Eigen::Index i = 1; i < track.frames(); ++i) {
      if (voiced[i] && voiced[i - 1]) {
        jumps += std::abs(track.f0[i] - track.f0[i - 1]);
        ++adjacent;
      }
    }
    v[7] = adjacent > 0 ? jumps / adjacent : 0.0;
  }
  v[4] = track.frames() > 0 ? static_cast<double>(f0.size()) / track.frames() : 0.0;
  return make_vector(FeatureKind::kProsodic, std::move(v));
}

FeatureVector proxy_speaker_embedding(const AudioBuffer& audio) {
  const ShortTimeAnalysis st = short_time(audio);
  const Eigen::MatrixXd c = cepstra(st.log_mel);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(kEmbeddingLength);
  const Eigen::RowVectorXd mean = c.colwise().mean();
  v.segment<13>(0) = mean.transpose();
  v.segment<13>(13) =
      ((c.rowwise() - mean).array().square().colwise().mean().sqrt()).transpose();

  // Long-term spectrum over frames within 30 dB of the loudest.
  const Eigen::VectorXd frame_energy = st.power.rowwise().sum();
  const double loudest = frame_energy.size() > 0 ? frame_energy.maxCoeff() : 0.0;
  const Eigen::MatrixXd bands = spectral::bark_band_matrix(23, 512, audio.sample_rate, 8000.0);
  Eigen::VectorXd ltas = Eigen::VectorXd::Zero(23);
  int active = 0;
  for (Eigen::Index f = 0; f < st.power.rows(); ++f) {
    if (loudest > 0.0 && frame_energy[f] >= 1e-3 * loudest) {
      ltas += bands * st.power.row(f).transpose();
      ++active;
    }
  }
  if (active > 0) ltas /= active;
  ltas = ltas.unaryExpr(&safe_log);
  v.segment<23>(26) = ltas.array() - ltas.mean();

  const PitchTrack track = track_pitch(audio);
  const Eigen::VectorXd f0 = select(track.f0, track.f0.array() > 0.0);
  if (f0.size() > 0) {
    const Eigen::ArrayXd octaves = (f0.array() / 100.0).log() / std::log(2.0);
    v[49] = octaves.mean();
    v[50] = std::sqrt((octaves - octaves.mean()).square().mean());
  }

  const double norm = v.norm();
  if (norm > 0.0) {
    v /= norm;
  } else {
    v[0] = 1.0;
  }
  return make_vector(FeatureKind::kProxyEmbedding, std::move(v));
}

FeatureVector logmelspec_stats(const AudioBuffer& audio, const LogMelParams& params) {
  const Spectrogram s = add_deltas(log_mel_spectrogram(audio, params));
  const Eigen::Index bins = s.values.cols();
  Eigen::VectorXd v(2 * bins);
  const Eigen::RowVectorXd mean = s.values.colwise().mean();
  v.head(bins) = mean.transpose();
  v.tail(bins) =
      ((s.values.rowwise() - mean).array().square().colwise().mean().sqrt()).transpose();
  FeatureVector out = make_vector(FeatureKind::kLogmelspecStats, std::move(v));
  if (out.values.size() != feature_length(FeatureKind::kLogmelspecStats)) {
    throw Error(ErrorCode::kInvalidArgument, "logmelspec_stats requires 64 mel bands");
  }
  return out;
}

FeatureVector extract_features(FeatureKind kind, const AudioBuffer& audio) {
  switch (kind) {
    case FeatureKind::kMsr: return msr_features(audio);
    case FeatureKind::kLldCompact: return compact_llds(audio);
    case FeatureKind::kProsodic: return prosodic_f0_features(audio);
    case FeatureKind::kProxyEmbedding: return proxy_speaker_embedding(audio);
    case FeatureKind::kLogmelspecStats: return logmelspec_stats(audio);
    case FeatureKind::kPhoneme: break;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "phoneme features are ingested from file, not extracted from audio");
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    std::string_view cell = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) cell.remove_suffix(1);
    if (cell.size() >= 2 && cell.front() == '"' && cell.back() == '"') cell = cell.substr(1, cell.size() - 2);
    out.emplace_back(cell);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

namespace {

double parse_number(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kSchema, "not a number in " + what + ": '" + s + "'");
  }
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingFile, "cannot open " + path.string());
  return in;
}

}  // namespace

PhonemeIngest ingest_phoneme_features(const std::filesystem::path& path,
                                      const std::set<std::string>* known) {
  std::ifstream in = open_input(path);
  PhonemeIngest result;
  std::string line;
  if (!std::getline(in, line) || line.find_first_not_of(" \t\r") == std::string::npos) {
    result.warnings.push_back("empty phoneme feature file: " + path.string());
    return result;
  }
  const std::vector<std::string> header = split_csv_line(line);
  const char* required[] = {"utterance_id", "n_mispronunciations", "n_pauses",
                            "phonemes_per_second"};
  int column[4];
  for (int i = 0; i < 4; ++i) {
    const auto it = std::find(header.begin(), header.end(), required[i]);
    if (it == header.end()) {
      throw Error(ErrorCode::kSchema,
                  "phoneme feature file lacks column '" + std::string(required[i]) + "'");
    }
    column[i] = static_cast<int>(it - header.begin());
  }
  std::set<std::string> seen;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::kSchema, "row " + std::to_string(row) + " has " +
                                          std::to_string(cells.size()) + " cells, header has " +
                                          std::to_string(header.size()));
    }
    const std::string& id = cells[static_cast<std::size_t>(column[0])];
    if (!seen.insert(id).second) {
      throw Error(ErrorCode::kDuplicateId, "duplicate utterance_id '" + id + "'");
    }
    Eigen::VectorXd values(3);
    for (int i = 0; i < 3; ++i) {
      values[i] = parse_number(cells[static_cast<std::size_t>(column[i + 1])],
                               std::string(required[i + 1]) + " of '" + id + "'");
    }
    FeatureVector v = make_vector(FeatureKind::kPhoneme, std::move(values));
    v.utterance_id = id;
    if (known != nullptr && known->count(id) == 0) result.unknown_ids.push_back(id);
    result.vectors.push_back(std::move(v));
  }
  if (result.vectors.empty()) {
    result.warnings.push_back("phoneme feature file has no rows: " + path.string());
  }
  if (!result.unknown_ids.empty()) {
    result.warnings.push_back(std::to_string(result.unknown_ids.size()) +
                              " utterance ids not in the manifest");
  }
  return result;
}

void write_feature_file(const std::filesystem::path& path,
                        const std::vector<FeatureVector>& rows) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kUnwritablePath, "cannot write " + path.string());
  const Eigen::Index width = rows.empty() ? 0 : rows.front().values.size();
  out << "utterance_id,kind,anonymization_tag,label,dataset_id";
  char buf[40];
  for (Eigen::Index i = 0; i < width; ++i) {
    std::snprintf(buf, sizeof buf, ",f%03ld", static_cast<long>(i));
    out << buf;
  }
  out << '\n';
  for (const FeatureVector& r : rows) {
    if (r.values.size() != width) {
      throw Error(ErrorCode::kDimensionMismatch, "mixed feature lengths in one file");
    }
    out << r.utterance_id << ',' << to_string(r.kind) << ',' << r.anonymization_tag << ','
        << (r.label ? to_string(*r.label) : "") << ',' << r.dataset_id;
    for (Eigen::Index i = 0; i < width; ++i) {
      std::snprintf(buf, sizeof buf, ",%.17g", r.values[i]);
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::kUnwritablePath, "write failed: " + path.string());
}

std::vector<FeatureVector> read_feature_file(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorCode::kEmptyPayload, "empty feature file: " + path.string());
  }
  const std::vector<std::string> header = split_csv_line(line);
  const std::vector<std::string> fixed = {"utterance_id", "kind", "anonymization_tag",
                                          "label", "dataset_id"};
  if (header.size() < fixed.size() ||
      !std::equal(fixed.begin(), fixed.end(), header.begin())) {
    throw Error(ErrorCode::kSchema, "feature file header must start with " +
                                        std::string("utterance_id,kind,anonymization_tag,label,dataset_id"));
  }
  const std::size_t width = header.size() - fixed.size();
  std::vector<FeatureVector> rows;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::kSchema, "feature row has " + std::to_string(cells.size()) +
                                          " cells, header has " + std::to_string(header.size()));
    }
    FeatureVector v;
    v.utterance_id = cells[0];
    v.kind = parse_feature_kind(cells[1]);
    v.anonymization_tag = cells[2];
    if (!cells[3].empty()) v.label = parse_label(cells[3]);
    v.dataset_id = cells[4];
    v.values.resize(static_cast<Eigen::Index>(width));
    for (std::size_t i = 0; i < width; ++i) {
      v.values[static_cast<Eigen::Index>(i)] = parse_number(cells[fixed.size() + i], "feature file");
    }
    v.validate();
    rows.push_back(std::move(v));
  }
  return rows;
}

Eigen::MatrixXd stack_features(const std::vector<FeatureVector>& rows) {
  if (rows.empty()) return Eigen::MatrixXd(0, 0);
  const Eigen::Index width = rows.front().values.size();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), width);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].values.size() != width) {
      throw Error(ErrorCode::kDimensionMismatch, "feature rows differ in length");
    }
    x.row(static_cast<Eigen::Index>(i)) = rows[i].values.transpose();
  }
  return x;
}

}  // namespace vpdiag
